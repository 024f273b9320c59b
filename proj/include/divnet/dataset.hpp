#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "divnet/errors.hpp"
#include "divnet/matrix.hpp"
#include "divnet/rng.hpp"

namespace divnet {

/// Labeled instances with features normalized to [0, 1].
struct Dataset {
  std::string name;
  Matrix inputs;            // instances x features
  std::vector<int> labels;  // each in [0, class_count)
  int class_count = 0;

  std::size_t size() const { return inputs.rows(); }
  std::size_t features() const { return inputs.cols(); }

  void validate() const {
    if (inputs.rows() != labels.size())
      throw precondition_error("Dataset: instance count and label count differ");
    for (int l : labels)
      if (l < 0 || l >= class_count)
        throw precondition_error("Dataset: label " + std::to_string(l) +
                                 " outside [0, " + std::to_string(class_count) + ")");
    for (double v : inputs.data())
      if (!(v >= 0.0 && v <= 1.0))
        throw precondition_error("Dataset: input value outside [0, 1]");
  }
};

struct DataSplit {
  Dataset train;
  Dataset test;
};

/// Uniform subsample of n instances without replacement, deterministic under
/// seed. Rows appear in draw order.
inline Dataset subsample(const Dataset& d, std::size_t n, std::uint64_t seed) {
  if (n > d.size())
    throw precondition_error("subsample: requested " + std::to_string(n) + " of " +
                             std::to_string(d.size()) + " instances");
  Rng rng(seed);
  const auto idx = rng.choice(d.size(), n);
  Dataset out;
  out.name = d.name;
  out.class_count = d.class_count;
  out.inputs = Matrix(n, d.features());
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = idx[i];
    std::copy(d.inputs.row_ptr(src), d.inputs.row_ptr(src) + d.features(), out.inputs.row_ptr(i));
    out.labels[i] = d.labels[src];
  }
  return out;
}

/// Gaussian class blobs clipped to [0,1], split 80/20. Deterministic under
/// seed; spread 0 collapses every instance onto its class centroid.
inline DataSplit synth_blobs(int class_count, std::size_t features, std::size_t per_class,
                             double spread, std::uint64_t seed) {
  if (class_count < 1 || features < 1 || per_class < 1)
    throw precondition_error("synth_blobs: all counts must be >= 1");
  Rng rng(seed);
  Matrix centroids(static_cast<std::size_t>(class_count), features);
  for (auto& v : centroids.data()) v = 0.15 + 0.7 * rng.uniform();

  const std::size_t total = static_cast<std::size_t>(class_count) * per_class;
  Matrix inputs(total, features);
  std::vector<int> labels(total);
  for (std::size_t i = 0; i < total; ++i) {
    const int cls = static_cast<int>(i % static_cast<std::size_t>(class_count));
    labels[i] = cls;
    for (std::size_t f = 0; f < features; ++f) {
      const double v = centroids(static_cast<std::size_t>(cls), f) + spread * rng.normal();
      inputs(i, f) = std::clamp(v, 0.0, 1.0);
    }
  }

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  const std::size_t n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(total))));
  DataSplit split;
  auto fill = [&](Dataset& d, std::size_t begin, std::size_t end) {
    d.name = "synth_blobs";
    d.class_count = class_count;
    d.inputs = Matrix(end - begin, features);
    d.labels.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t src = order[i];
      std::copy(inputs.row_ptr(src), inputs.row_ptr(src) + features, d.inputs.row_ptr(i - begin));
      d.labels[i - begin] = labels[src];
    }
  };
  fill(split.train, 0, std::min(n_train, total));
  fill(split.test, std::min(n_train, total), total);
  return split;
}

/// Rotate one H x W grayscale image by `angle` radians about its center,
/// bilinear interpolation, zero outside the frame.
inline void rotate_image(const double* src, double* dst, std::size_t h, std::size_t w,
                         double angle) {
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      // inverse map: where does this output pixel come from?
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double sy = cy + (c * dy + s * dx);
      const double sx = cx + (-s * dy + c * dx);
      double v = 0.0;
      const double fy = std::floor(sy), fx = std::floor(sx);
      const long iy = static_cast<long>(fy), ix = static_cast<long>(fx);
      const double wy = sy - fy, wx = sx - fx;
      auto at = [&](long yy, long xx) -> double {
        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) return 0.0;
        return src[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
      };
      v = (1.0 - wy) * ((1.0 - wx) * at(iy, ix) + wx * at(iy, ix + 1)) +
          wy * ((1.0 - wx) * at(iy + 1, ix) + wx * at(iy + 1, ix + 1));
      dst[y * w + x] = std::clamp(v, 0.0, 1.0);
    }
  }
}

/// Rotation-augmented copy of an image dataset: `target_count` instances,
/// sources cycled in seeded-permutation order, each rotated by an
/// independent uniform angle in [0, 2pi). Deterministic under seed.
inline Dataset augment_rotated(const Dataset& d, std::size_t target_count, std::size_t img_h,
                               std::size_t img_w, std::uint64_t seed,
                               const std::string& name_suffix = "_rot_synth") {
  if (d.size() == 0) throw precondition_error("augment_rotated: empty source dataset");
  if (img_h * img_w != d.features())
    throw precondition_error("augment_rotated: image shape does not match feature width");
  Rng rng(seed);
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  Dataset out;
  out.name = d.name + name_suffix;
  out.class_count = d.class_count;
  out.inputs = Matrix(target_count, d.features());
  out.labels.resize(target_count);
  for (std::size_t i = 0; i < target_count; ++i) {
    const std::size_t src = order[i % order.size()];
    const double angle = rng.uniform() * 6.28318530717958647692;
    rotate_image(d.inputs.row_ptr(src), out.inputs.row_ptr(i), img_h, img_w, angle);
    out.labels[i] = d.labels[src];
  }
  return out;
}

// --- canonical binary container ---------------------------------------------
//
// Layout (little-endian): magic "DVND", u32 version, u32 name length, name
// bytes, u32 class_count, u64 rows, u64 cols, rows u32 labels, rows*cols f64
// inputs. Lossless: doubles are stored as raw IEEE-754 bit patterns.

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
  write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void write_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  write_u64(os, v);
}

struct BinReader {
  std::istream& is;
  std::size_t offset = 0;
  std::string path;

  void need(std::size_t n, const char* what) {
    if (!is.good())
      throw format_error(path + ": truncated while reading " + what + " at byte offset " +
                         std::to_string(offset));
    (void)n;
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    need(4, what);
    offset += 4;
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint32_t u32_be(const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    need(4, what);
    offset += 4;
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
  }
  std::uint64_t u64(const char* what) {
    const std::uint64_t lo = u32(what);
    const std::uint64_t hi = u32(what);
    return lo | (hi << 32);
  }
  double f64(const char* what) {
    const std::uint64_t v = u64(what);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  void bytes(unsigned char* dst, std::size_t n, const char* what) {
    is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
      throw format_error(path + ": truncated while reading " + what + " at byte offset " +
                         std::to_string(offset + static_cast<std::size_t>(is.gcount())));
    offset += n;
  }
};

inline std::ifstream open_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw format_error(path + ": cannot open file");
  return f;
}

}  // namespace detail

inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw format_error(path + ": cannot open for writing");
  os.write("DVND", 4);
  detail::write_u32(os, 1);  // version
  detail::write_u32(os, static_cast<std::uint32_t>(d.name.size()));
  os.write(d.name.data(), static_cast<std::streamsize>(d.name.size()));
  detail::write_u32(os, static_cast<std::uint32_t>(d.class_count));
  detail::write_u64(os, d.inputs.rows());
  detail::write_u64(os, d.inputs.cols());
  for (int l : d.labels) detail::write_u32(os, static_cast<std::uint32_t>(l));
  for (double v : d.inputs.data()) detail::write_f64(os, v);
  if (!os) throw format_error(path + ": write failed");
}

inline Dataset load_dataset(const std::string& path) {
  auto f = detail::open_binary(path);
  detail::BinReader r{f, 0, path};
  unsigned char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "DVND", 4) != 0)
    throw format_error(path + ": bad dataset magic at byte offset 0");
  const std::uint32_t version = r.u32("version");
  if (version != 1)
    throw format_error(path + ": unsupported dataset version " + std::to_string(version));
  const std::uint32_t name_len = r.u32("name length");
  std::string name(name_len, '\0');
  if (name_len) r.bytes(reinterpret_cast<unsigned char*>(name.data()), name_len, "name");
  Dataset d;
  d.name = name;
  d.class_count = static_cast<int>(r.u32("class count"));
  const std::uint64_t rows = r.u64("row count");
  const std::uint64_t cols = r.u64("column count");
  d.labels.resize(rows);
  for (auto& l : d.labels) l = static_cast<int>(r.u32("label"));
  d.inputs = Matrix(rows, cols);
  for (auto& v : d.inputs.data()) v = r.f64("input value");
  d.validate();
  return d;
}

}  // namespace divnet
