#pragma once

#include <stdexcept>
#include <string>

namespace divnet {

/// Base class for all errors thrown by this library.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition (bad shape, out-of-range index, ...).
struct precondition_error : error {
  using error::error;
};

/// An input file does not conform to its declared format.
struct format_error : error {
  using error::error;
};

/// A numerical routine failed to converge or produced an invalid result.
struct numeric_error : error {
  using error::error;
};

/// Training diverged (non-finite loss).
struct training_error : error {
  training_error(const std::string& msg, int epoch_idx) : error(msg), epoch(epoch_idx) {}
  int epoch;
};

}  // namespace divnet
