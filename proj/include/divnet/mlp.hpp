#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "divnet/activation.hpp"
#include "divnet/dataset.hpp"
#include "divnet/errors.hpp"
#include "divnet/matrix.hpp"
#include "divnet/rng.hpp"

namespace divnet {

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::size_t batch_size = 100;
  double error_threshold = 0.01;  // stop once train error drops below this
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw precondition_error("TrainConfig: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw precondition_error("TrainConfig: momentum must be in [0, 1)");
    if (batch_size < 1) throw precondition_error("TrainConfig: batch_size must be >= 1");
    if (!(error_threshold > 0.0 && error_threshold < 1.0))
      throw precondition_error("TrainConfig: error_threshold must be in (0, 1)");
    if (max_epochs < 1) throw precondition_error("TrainConfig: max_epochs must be >= 1");
  }
};

/// Fully connected feed-forward network: sigmoid hidden layers, softmax
/// output. weights[l] has shape layer_sizes[l] x layer_sizes[l+1].
struct NetworkParams {
  std::vector<std::size_t> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  std::size_t layer_count() const { return layer_sizes.size(); }
  std::size_t hidden_count() const { return layer_sizes.size() - 2; }
  std::size_t input_width() const { return layer_sizes.front(); }
  std::size_t output_width() const { return layer_sizes.back(); }

  void validate() const {
    if (layer_sizes.size() < 2) throw precondition_error("NetworkParams: need >= 2 layers");
    if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size())
      throw precondition_error("NetworkParams: weight/bias count mismatch");
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
      if (weights[l].rows() != layer_sizes[l] || weights[l].cols() != layer_sizes[l + 1])
        throw precondition_error("NetworkParams: weight matrix " + std::to_string(l) +
                                 " has wrong shape");
      if (biases[l].size() != layer_sizes[l + 1])
        throw precondition_error("NetworkParams: bias " + std::to_string(l) + " has wrong length");
      if (!weights[l].all_finite())
        throw precondition_error("NetworkParams: non-finite weights in layer " + std::to_string(l));
      for (double b : biases[l])
        if (!std::isfinite(b))
          throw precondition_error("NetworkParams: non-finite bias in layer " + std::to_string(l));
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }
};

namespace detail {

// Sigmoid pinned to the open interval (0, 1) so activation vectors and
// downstream kernels never see an exact 0 or 1.
inline double sigmoid(double z) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  if (s >= 1.0) return std::nextafter(1.0, 0.0);
  if (s <= 0.0) return std::numeric_limits<double>::min();
  return s;
}

inline void softmax_rows(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* row = m.row_ptr(i);
    double mx = row[0];
    for (std::size_t j = 1; j < m.cols(); ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] /= sum;
  }
}

// z = x * w + b, row-major; fan-in loop innermost over contiguous rows of w.
inline Matrix affine(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
  Matrix z(x.rows(), w.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double* zi = z.row_ptr(i);
    for (std::size_t j = 0; j < w.cols(); ++j) zi[j] = b[j];
    const double* xi = x.row_ptr(i);
    for (std::size_t k = 0; k < w.rows(); ++k) {
      const double xik = xi[k];
      if (xik == 0.0) continue;
      const double* wk = w.row_ptr(k);
      for (std::size_t j = 0; j < w.cols(); ++j) zi[j] += xik * wk[j];
    }
  }
  return z;
}

}  // namespace detail

/// Sigmoid-aware uniform initialization in +/- 4*sqrt(6/(fan_in+fan_out));
/// biases start at zero. Deterministic under seed.
inline NetworkParams init_network(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw precondition_error("init_network: need >= 2 layers");
  for (std::size_t s : layer_sizes)
    if (s < 1) throw precondition_error("init_network: layer sizes must be >= 1");
  NetworkParams net;
  net.layer_sizes = layer_sizes;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const std::size_t fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
    const double r = 4.0 * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (auto& x : w.data()) x = (2.0 * rng.uniform() - 1.0) * r;
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(fan_out, 0.0);
  }
  return net;
}

/// All per-layer activations for a batch of inputs: result[0] is the input,
/// result[1..H] the hidden sigmoid activations, result.back() the softmax
/// output probabilities (rows sum to 1).
inline std::vector<Matrix> forward(const NetworkParams& net, const Matrix& inputs) {
  if (inputs.cols() != net.input_width())
    throw precondition_error("forward: input width " + std::to_string(inputs.cols()) +
                             " != layer size " + std::to_string(net.input_width()));
  std::vector<Matrix> acts;
  acts.reserve(net.layer_count());
  acts.push_back(inputs);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Matrix z = detail::affine(acts.back(), net.weights[l], net.biases[l]);
    if (l + 1 < net.weights.size()) {
      for (auto& v : z.data()) v = detail::sigmoid(v);
    } else {
      detail::softmax_rows(z);
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

/// Mean cross-entropy of the softmax output against integer labels.
inline double cross_entropy(const Matrix& probs, const std::vector<int>& labels,
                            std::size_t begin = 0) {
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const double p = probs(i, static_cast<std::size_t>(labels[begin + i]));
    loss -= std::log(std::max(p, 1e-300));
  }
  return loss / static_cast<double>(probs.rows());
}

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

/// Backprop gradients of the mean cross-entropy loss for one batch.
/// `acts` must come from forward(net, batch_inputs).
inline Gradients backprop(const NetworkParams& net, const std::vector<Matrix>& acts,
                          const std::vector<int>& labels, std::size_t label_begin = 0) {
  const std::size_t batch = acts.front().rows();
  const double inv_batch = 1.0 / static_cast<double>(batch);
  Gradients g;
  g.weights.resize(net.weights.size());
  g.biases.resize(net.weights.size());

  Matrix dz = acts.back();  // softmax probs
  for (std::size_t i = 0; i < batch; ++i)
    dz(i, static_cast<std::size_t>(labels[label_begin + i])) -= 1.0;
  for (auto& v : dz.data()) v *= inv_batch;

  for (std::size_t l = net.weights.size(); l-- > 0;) {
    g.weights[l] = matmul_at_b(acts[l], dz);
    auto& db = g.biases[l];
    db.assign(net.biases[l].size(), 0.0);
    for (std::size_t i = 0; i < dz.rows(); ++i) {
      const double* row = dz.row_ptr(i);
      for (std::size_t j = 0; j < dz.cols(); ++j) db[j] += row[j];
    }
    if (l > 0) {
      Matrix da = matmul_a_bt(dz, net.weights[l]);
      const Matrix& a = acts[l];
      for (std::size_t i = 0; i < da.rows(); ++i)
        for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) *= a(i, j) * (1.0 - a(i, j));
      dz = std::move(da);
    }
  }
  return g;
}

/// Fraction of argmax mispredictions; argmax ties resolve to the lowest
/// class index. Evaluates in fixed-size batches.
inline double classification_error(const NetworkParams& net, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  constexpr std::size_t kEvalBatch = 512;
  std::size_t wrong = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += kEvalBatch) {
    const std::size_t end = std::min(begin + kEvalBatch, data.size());
    Matrix batch(end - begin, data.features());
    std::copy(data.inputs.row_ptr(begin), data.inputs.row_ptr(begin) + (end - begin) * data.features(),
              batch.data().begin());
    const auto acts = forward(net, batch);
    const Matrix& probs = acts.back();
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      std::size_t arg = 0;
      double best = probs(i, 0);
      for (std::size_t c = 1; c < probs.cols(); ++c)
        if (probs(i, c) > best) {
          best = probs(i, c);
          arg = c;
        }
      if (static_cast<int>(arg) != data.labels[begin + i]) ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

struct EpochStats {
  std::size_t epoch = 0;
  double train_error = 1.0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  NetworkParams net;
  std::vector<EpochStats> log;
  bool reached_threshold = false;
  double total_seconds = 0.0;
};

/// Mini-batch SGD with momentum. Stops at the first epoch whose training
/// classification error drops below cfg.error_threshold, otherwise at
/// max_epochs. Bit-deterministic under cfg.seed (single-threaded on purpose).
inline TrainResult train(NetworkParams net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  if (data.size() == 0) throw precondition_error("train: empty training set");
  if (data.features() != net.input_width())
    throw precondition_error("train: dataset width does not match network input");

  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(cfg.seed);
  std::vector<Matrix> vel_w;
  std::vector<std::vector<double>> vel_b;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    vel_w.emplace_back(net.weights[l].rows(), net.weights[l].cols());
    vel_b.emplace_back(net.biases[l].size(), 0.0);
  }

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto te = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batch_count = 0;

    for (std::size_t begin = 0; begin < data.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, data.size());
      Matrix batch(end - begin, data.features());
      std::vector<int> labels(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t src = order[i];
        std::copy(data.inputs.row_ptr(src), data.inputs.row_ptr(src) + data.features(),
                  batch.row_ptr(i - begin));
        labels[i - begin] = data.labels[src];
      }
      const auto acts = forward(net, batch);
      loss_sum += cross_entropy(acts.back(), labels);
      ++batch_count;
      const Gradients g = backprop(net, acts, labels);
      for (std::size_t l = 0; l < net.weights.size(); ++l) {
        auto& w = net.weights[l].data();
        auto& vw = vel_w[l].data();
        const auto& gw = g.weights[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
          vw[i] = cfg.momentum * vw[i] - cfg.learning_rate * gw[i];
          w[i] += vw[i];
        }
        auto& b = net.biases[l];
        auto& vb = vel_b[l];
        const auto& gb = g.biases[l];
        for (std::size_t i = 0; i < b.size(); ++i) {
          vb[i] = cfg.momentum * vb[i] - cfg.learning_rate * gb[i];
          b[i] += vb[i];
        }
      }
    }

    const double mean_loss = loss_sum / static_cast<double>(batch_count);
    if (!std::isfinite(mean_loss))
      throw training_error("train: loss diverged (non-finite) at epoch " + std::to_string(epoch),
                           static_cast<int>(epoch));
    const double err = classification_error(net, data);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_error = err;
    stats.mean_loss = mean_loss;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - te).count();
    result.log.push_back(stats);
    if (err < cfg.error_threshold) {
      result.reached_threshold = true;
      break;
    }
  }

  result.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.net = std::move(net);
  return result;
}

/// Activation matrix of one hidden layer over the training data (row i =
/// neuron i). instance_cap > 0 subsamples that many instances (seeded);
/// a cap at or above the dataset size uses everything.
inline ActivationMatrix layer_activations(const NetworkParams& net, const Dataset& data,
                                          int layer_index, std::size_t instance_cap = 0,
                                          std::uint64_t cap_seed = 0) {
  if (layer_index < 1 || static_cast<std::size_t>(layer_index) > net.hidden_count())
    throw precondition_error("layer_activations: layer index " + std::to_string(layer_index) +
                             " outside [1, " + std::to_string(net.hidden_count()) + "]");
  const Dataset* src = &data;
  Dataset capped;
  if (instance_cap > 0 && instance_cap < data.size()) {
    capped = subsample(data, instance_cap, cap_seed);
    src = &capped;
  }
  ActivationMatrix out;
  out.layer_index = layer_index;
  out.instance_count = src->size();
  out.values = Matrix(net.layer_sizes[static_cast<std::size_t>(layer_index)], src->size());

  constexpr std::size_t kEvalBatch = 512;
  for (std::size_t begin = 0; begin < src->size(); begin += kEvalBatch) {
    const std::size_t end = std::min(begin + kEvalBatch, src->size());
    Matrix batch(end - begin, src->features());
    std::copy(src->inputs.row_ptr(begin), src->inputs.row_ptr(begin) + (end - begin) * src->features(),
              batch.data().begin());
    const auto acts = forward(net, batch);
    const Matrix& layer = acts[static_cast<std::size_t>(layer_index)];
    for (std::size_t i = 0; i < layer.rows(); ++i)
      for (std::size_t n = 0; n < layer.cols(); ++n) out.values(n, begin + i) = layer(i, n);
  }
  return out;
}

// --- model container ---------------------------------------------------------
//
// Layout (little-endian): magic "DVNM", u32 version, u32 layer count, u64
// sizes, per connection weights then bias (f64), then the training config
// (f64 lr, f64 momentum, u64 batch, f64 threshold, u64 max_epochs, u64 seed).

inline void save_model(const NetworkParams& net, const std::string& path,
                       const TrainConfig& cfg = {}) {
  net.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw format_error(path + ": cannot open for writing");
  os.write("DVNM", 4);
  detail::write_u32(os, 1);
  detail::write_u32(os, static_cast<std::uint32_t>(net.layer_sizes.size()));
  for (std::size_t s : net.layer_sizes) detail::write_u64(os, s);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (double v : net.weights[l].data()) detail::write_f64(os, v);
    for (double v : net.biases[l]) detail::write_f64(os, v);
  }
  detail::write_f64(os, cfg.learning_rate);
  detail::write_f64(os, cfg.momentum);
  detail::write_u64(os, cfg.batch_size);
  detail::write_f64(os, cfg.error_threshold);
  detail::write_u64(os, cfg.max_epochs);
  detail::write_u64(os, cfg.seed);
  if (!os) throw format_error(path + ": write failed");
}

inline NetworkParams load_model(const std::string& path, TrainConfig* cfg_out = nullptr) {
  auto f = detail::open_binary(path);
  detail::BinReader r{f, 0, path};
  unsigned char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "DVNM", 4) != 0)
    throw format_error(path + ": bad model magic at byte offset 0");
  const std::uint32_t version = r.u32("version");
  if (version != 1)
    throw format_error(path + ": unsupported model version " + std::to_string(version));
  const std::uint32_t layer_count = r.u32("layer count");
  if (layer_count < 2) throw format_error(path + ": fewer than 2 layers");
  NetworkParams net;
  net.layer_sizes.resize(layer_count);
  for (auto& s : net.layer_sizes) s = r.u64("layer size");
  for (std::size_t l = 0; l + 1 < layer_count; ++l) {
    Matrix w(net.layer_sizes[l], net.layer_sizes[l + 1]);
    for (auto& v : w.data()) v = r.f64("weight");
    net.weights.push_back(std::move(w));
    std::vector<double> b(net.layer_sizes[l + 1]);
    for (auto& v : b) v = r.f64("bias");
    net.biases.push_back(std::move(b));
  }
  TrainConfig cfg;
  cfg.learning_rate = r.f64("learning rate");
  cfg.momentum = r.f64("momentum");
  cfg.batch_size = r.u64("batch size");
  cfg.error_threshold = r.f64("error threshold");
  cfg.max_epochs = r.u64("max epochs");
  cfg.seed = r.u64("seed");
  if (cfg_out) *cfg_out = cfg;
  net.validate();
  return net;
}

}  // namespace divnet
