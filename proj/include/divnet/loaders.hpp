#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "divnet/dataset.hpp"
#include "divnet/errors.hpp"

namespace divnet {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// IDX image/label pair (MNIST layout, big-endian headers). Pixel bytes are
/// divided by 255 so features land in [0, 1]. Labels must be < class_count.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        int class_count = 10) {
  Dataset d;
  {
    auto f = detail::open_binary(images_path);
    detail::BinReader r{f, 0, images_path};
    const std::uint32_t magic = r.u32_be("image magic");
    if (magic != kIdxImagesMagic)
      throw format_error(images_path + ": bad image magic at byte offset 0 (got 0x" +
                         [&] { std::ostringstream o; o << std::hex << magic; return o.str(); }() +
                         ", want 0x803)");
    const std::uint32_t count = r.u32_be("image count");
    const std::uint32_t rows = r.u32_be("image rows");
    const std::uint32_t cols = r.u32_be("image cols");
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    d.inputs = Matrix(count, pixels);
    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
      r.bytes(buf.data(), pixels, "pixel data");
      double* row = d.inputs.row_ptr(i);
      for (std::size_t p = 0; p < pixels; ++p) row[p] = static_cast<double>(buf[p]) / 255.0;
    }
  }
  {
    auto f = detail::open_binary(labels_path);
    detail::BinReader r{f, 0, labels_path};
    const std::uint32_t magic = r.u32_be("label magic");
    if (magic != kIdxLabelsMagic)
      throw format_error(labels_path + ": bad label magic at byte offset 0");
    const std::uint32_t count = r.u32_be("label count");
    if (count != d.inputs.rows())
      throw format_error(labels_path + ": label count " + std::to_string(count) +
                         " does not match image count " + std::to_string(d.inputs.rows()));
    d.labels.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      unsigned char b;
      r.bytes(&b, 1, "label");
      if (b >= class_count)
        throw format_error(labels_path + ": label " + std::to_string(int(b)) + " at byte offset " +
                           std::to_string(r.offset - 1) + " is >= class count " +
                           std::to_string(class_count));
      d.labels[i] = b;
    }
  }
  d.name = "idx";
  d.class_count = class_count;
  return d;
}

/// Whitespace-separated text, one instance per line: feature_count features
/// followed by a numeric label. Features are clamped to [0, 1].
/// class_count 0 means "infer as max label + 1".
inline Dataset load_amat(const std::string& path, std::size_t feature_count, int class_count = 0) {
  std::ifstream f(path);
  if (!f) throw format_error(path + ": cannot open file");
  Dataset d;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ss(line);
    std::vector<double> fields;
    fields.reserve(feature_count + 1);
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        fields.push_back(v);
      } catch (const std::exception&) {
        throw format_error(path + ":" + std::to_string(line_no) + ": non-numeric token '" + tok +
                           "'");
      }
    }
    if (fields.size() != feature_count + 1)
      throw format_error(path + ":" + std::to_string(line_no) + ": expected " +
                         std::to_string(feature_count + 1) + " fields, got " +
                         std::to_string(fields.size()));
    const double raw_label = fields.back();
    const int label = static_cast<int>(std::llround(raw_label));
    if (std::abs(raw_label - label) > 1e-9 || label < 0)
      throw format_error(path + ":" + std::to_string(line_no) + ": label '" +
                         std::to_string(raw_label) + "' is not a nonnegative integer");
    max_label = std::max(max_label, label);
    for (std::size_t i = 0; i < feature_count; ++i)
      values.push_back(std::clamp(fields[i], 0.0, 1.0));
    d.labels.push_back(label);
  }
  d.name = "amat";
  d.class_count = class_count > 0 ? class_count : max_label + 1;
  d.inputs = Matrix(d.labels.size(), feature_count);
  std::copy(values.begin(), values.end(), d.inputs.data().begin());
  for (int l : d.labels)
    if (l >= d.class_count)
      throw format_error(path + ": label " + std::to_string(l) + " >= class count " +
                         std::to_string(d.class_count));
  return d;
}

/// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes.
/// Empty files contribute zero instances (not an error).
inline Dataset load_cifar10(const std::vector<std::string>& batch_paths) {
  constexpr std::size_t kRecord = 3073;
  constexpr std::size_t kPixels = 3072;
  Dataset d;
  d.name = "cifar10";
  d.class_count = 10;
  std::vector<double> values;
  for (const auto& path : batch_paths) {
    auto f = detail::open_binary(path);
    f.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::size_t>(f.tellg());
    f.seekg(0, std::ios::beg);
    if (file_size % kRecord != 0)
      throw format_error(path + ": file size " + std::to_string(file_size) +
                         " is not a multiple of " + std::to_string(kRecord));
    detail::BinReader r{f, 0, path};
    std::vector<unsigned char> rec(kRecord);
    for (std::size_t i = 0; i < file_size / kRecord; ++i) {
      r.bytes(rec.data(), kRecord, "record");
      if (rec[0] >= 10)
        throw format_error(path + ": label " + std::to_string(int(rec[0])) + " at byte offset " +
                           std::to_string(r.offset - kRecord) + " is >= 10");
      d.labels.push_back(rec[0]);
      for (std::size_t p = 0; p < kPixels; ++p)
        values.push_back(static_cast<double>(rec[1 + p]) / 255.0);
    }
  }
  d.inputs = Matrix(d.labels.size(), kPixels);
  std::copy(values.begin(), values.end(), d.inputs.data().begin());
  return d;
}

}  // namespace divnet
