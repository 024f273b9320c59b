#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "divnet/errors.hpp"

namespace divnet {

/// Deterministic number formatting shared by every CSV and SVG writer:
/// %.9g is stable across platforms and keeps error ratios exact enough
/// for byte-wise output comparison.
inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : os_(path) {
    if (!os_) throw format_error(path + ": cannot open for writing");
    path_ = path;
    columns_ = header.size();
    write_row(header);
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_)
      throw precondition_error(path_ + ": row has " + std::to_string(cells.size()) +
                               " cells, header has " + std::to_string(columns_));
    write_row(cells);
  }

  void close() {
    os_.flush();
    if (!os_) throw format_error(path_ + ": write failed");
    os_.close();
  }

 private:
  void write_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << cells[i] << (i + 1 < cells.size() ? "," : "");
    os_ << "\n";
  }

  std::ofstream os_;
  std::string path_;
  std::size_t columns_ = 0;
};

}  // namespace divnet
