#pragma once

#include <cstddef>

#include "divnet/matrix.hpp"

namespace divnet {

/// Post-sigmoid activations of one hidden layer: row i is the activation
/// vector of neuron i across the (possibly subsampled) training instances.
struct ActivationMatrix {
  int layer_index = 0;  // 1-based hidden layer index
  Matrix values;        // neurons x instances, entries in (0, 1)
  std::size_t instance_count = 0;

  std::size_t neuron_count() const { return values.rows(); }
};

}  // namespace divnet
