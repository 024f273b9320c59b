#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "divnet/dpp.hpp"
#include "divnet/errors.hpp"
#include "divnet/mlp.hpp"

namespace divnet {

/// Which neurons of one hidden layer survive, and (optionally) the fusion
/// coefficients expressing each removed neuron in the kept basis
/// (alphas column r corresponds to removed[r]).
struct PruneDecision {
  int layer_index = 0;
  std::size_t width = 0;
  std::vector<int> kept;
  std::vector<int> removed;
  std::optional<Matrix> alphas;  // kept.size() x removed.size()

  void validate() const {
    if (kept.empty()) throw precondition_error("PruneDecision: kept set must be nonempty");
    if (kept.size() + removed.size() != width)
      throw precondition_error("PruneDecision: kept + removed must cover the layer");
    std::vector<bool> seen(width, false);
    for (const auto* set : {&kept, &removed}) {
      for (int i : *set) {
        if (i < 0 || static_cast<std::size_t>(i) >= width || seen[static_cast<std::size_t>(i)])
          throw precondition_error("PruneDecision: indices must be distinct and in range");
        seen[static_cast<std::size_t>(i)] = true;
      }
      if (!std::is_sorted(set->begin(), set->end()))
        throw precondition_error("PruneDecision: index sets must be sorted");
    }
    if (alphas && (alphas->rows() != kept.size() || alphas->cols() != removed.size()))
      throw precondition_error("PruneDecision: alphas shape mismatch");
  }
};

struct DppOptions {
  std::optional<double> beta;  // empty = 10 / instance count
  double epsilon = 0.01;
  enum class GammaMode { paper, exact, none } gamma_mode = GammaMode::paper;
  enum class Sampler { kdpp, dpp, best_of_m, greedy } sampler = Sampler::kdpp;
  std::size_t best_of_m = 10;
  std::size_t instance_cap = 0;  // 0 = use the full training set
};

struct StrategyConfig {
  enum class Kind { dpp, random, importance } kind = Kind::dpp;
  std::size_t target_k = 0;
  bool reweight = false;
  DppOptions dpp;
  double ridge = 1e-8;
  std::uint64_t seed = 0;
};

inline PruneDecision decision_from_kept(int layer_index, std::size_t width,
                                        std::vector<int> kept) {
  std::sort(kept.begin(), kept.end());
  PruneDecision d;
  d.layer_index = layer_index;
  d.width = width;
  d.kept = std::move(kept);
  std::vector<bool> is_kept(width, false);
  for (int i : d.kept) is_kept[static_cast<std::size_t>(i)] = true;
  for (std::size_t i = 0; i < width; ++i)
    if (!is_kept[i]) d.removed.push_back(static_cast<int>(i));
  d.validate();
  return d;
}

/// Diverse selection: kernel over the layer's activation rows, then a
/// (k-)DPP sample. Non-parametric `dpp` sampling retries on the (rare)
/// empty draw so the decision always keeps at least one neuron.
inline PruneDecision select_dpp(const ActivationMatrix& acts, const StrategyConfig& cfg) {
  const std::size_t n = acts.neuron_count();
  if (cfg.target_k < 1 || cfg.target_k >= n)
    throw precondition_error("select_dpp: target_k must be in [1, n)");

  DppKernel kernel = build_kernel(acts, cfg.dpp.beta, cfg.dpp.epsilon);
  if (cfg.dpp.gamma_mode == DppOptions::GammaMode::paper)
    kernel = rescale_to_k(kernel, cfg.target_k, RescaleMode::paper);
  else if (cfg.dpp.gamma_mode == DppOptions::GammaMode::exact)
    kernel = rescale_to_k(kernel, cfg.target_k, RescaleMode::exact);

  Rng rng(cfg.seed);
  NeuronSubset subset;
  switch (cfg.dpp.sampler) {
    case DppOptions::Sampler::kdpp:
      subset = sample_kdpp(kernel, cfg.target_k, rng);
      break;
    case DppOptions::Sampler::best_of_m:
      subset = sample_best_of_m(kernel, cfg.target_k, cfg.dpp.best_of_m, rng);
      break;
    case DppOptions::Sampler::greedy:
      subset = greedy_map(kernel, cfg.target_k);
      break;
    case DppOptions::Sampler::dpp: {
      for (int attempt = 0; attempt < 100; ++attempt) {
        subset = sample_dpp(kernel, rng);
        if (!subset.indices.empty() && subset.indices.size() < n) break;
      }
      if (subset.indices.empty() || subset.indices.size() >= n)
        throw numeric_error("select_dpp: non-parametric sampling kept none or all neurons");
      break;
    }
  }
  return decision_from_kept(acts.layer_index, n, subset.indices);
}

/// Uniform k-subset baseline.
inline PruneDecision select_random(int layer_index, std::size_t width, std::size_t target_k,
                                   Rng& rng) {
  if (target_k < 1 || target_k >= width)
    throw precondition_error("select_random: target_k must be in [1, n)");
  const auto picks = rng.choice(width, target_k);
  std::vector<int> kept(picks.begin(), picks.end());
  return decision_from_kept(layer_index, width, std::move(kept));
}

/// Mean absolute outgoing weight of each neuron.
inline std::vector<double> onorm_scores(const Matrix& next_weights) {
  std::vector<double> scores(next_weights.rows(), 0.0);
  for (std::size_t i = 0; i < next_weights.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < next_weights.cols(); ++j) s += std::abs(next_weights(i, j));
    scores[i] = s / static_cast<double>(next_weights.cols());
  }
  return scores;
}

/// Importance baseline: keep the target_k neurons with the largest onorm;
/// ties resolve toward the lower index.
inline PruneDecision select_importance(int layer_index, const Matrix& next_weights,
                                       std::size_t target_k) {
  const std::size_t n = next_weights.rows();
  if (target_k < 1 || target_k >= n)
    throw precondition_error("select_importance: target_k must be in [1, n)");
  const auto scores = onorm_scores(next_weights);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  order.resize(target_k);
  return decision_from_kept(layer_index, n, std::move(order));
}

/// Least-squares fusion coefficients: alphas minimizing
/// ||v_r - sum_i alpha_ir v_i|| over the kept activation rows, one column
/// per removed neuron. Ridge handles the near-collinear case.
inline PruneDecision compute_fusion(const ActivationMatrix& acts, PruneDecision decision,
                                    double ridge = 1e-8) {
  decision.validate();
  if (acts.neuron_count() != decision.width)
    throw precondition_error("compute_fusion: activation row count != decision width");
  const std::size_t t = acts.values.cols();
  Matrix kept_t(t, decision.kept.size());
  for (std::size_t a = 0; a < decision.kept.size(); ++a) {
    const double* row = acts.values.row_ptr(static_cast<std::size_t>(decision.kept[a]));
    for (std::size_t c = 0; c < t; ++c) kept_t(c, a) = row[c];
  }
  Matrix removed_t(t, decision.removed.size());
  for (std::size_t r = 0; r < decision.removed.size(); ++r) {
    const double* row = acts.values.row_ptr(static_cast<std::size_t>(decision.removed[r]));
    for (std::size_t c = 0; c < t; ++c) removed_t(c, r) = row[c];
  }
  decision.alphas = lstsq(kept_t, removed_t, ridge);
  return decision;
}

namespace detail {

inline NetworkParams surgery(const NetworkParams& net, const PruneDecision& decision,
                             bool fuse) {
  decision.validate();
  const auto layer = static_cast<std::size_t>(decision.layer_index);
  if (decision.layer_index < 1 || layer > net.hidden_count())
    throw precondition_error("prune: layer index outside the hidden range");
  if (net.layer_sizes[layer] != decision.width)
    throw precondition_error("prune: decision width does not match the layer");
  if (fuse && !decision.alphas)
    throw precondition_error("prune: fusion requested but alphas are absent");

  const std::size_t k = decision.kept.size();
  NetworkParams out = net;
  out.layer_sizes[layer] = k;

  // incoming weights: drop the columns (and biases) of removed neurons
  const Matrix& w_in = net.weights[layer - 1];
  Matrix new_in(w_in.rows(), k);
  for (std::size_t r = 0; r < w_in.rows(); ++r)
    for (std::size_t a = 0; a < k; ++a)
      new_in(r, a) = w_in(r, static_cast<std::size_t>(decision.kept[a]));
  out.weights[layer - 1] = std::move(new_in);
  std::vector<double> new_bias(k);
  for (std::size_t a = 0; a < k; ++a)
    new_bias[a] = net.biases[layer - 1][static_cast<std::size_t>(decision.kept[a])];
  out.biases[layer - 1] = std::move(new_bias);

  // outgoing weights: keep rows, optionally absorbing the removed rows
  const Matrix& w_out = net.weights[layer];
  Matrix new_out(k, w_out.cols());
  for (std::size_t a = 0; a < k; ++a) {
    const double* src = w_out.row_ptr(static_cast<std::size_t>(decision.kept[a]));
    double* dst = new_out.row_ptr(a);
    std::copy(src, src + w_out.cols(), dst);
    if (fuse) {
      for (std::size_t r = 0; r < decision.removed.size(); ++r) {
        const double alpha = (*decision.alphas)(a, r);
        if (alpha == 0.0) continue;
        const double* rem = w_out.row_ptr(static_cast<std::size_t>(decision.removed[r]));
        for (std::size_t j = 0; j < w_out.cols(); ++j) dst[j] += alpha * rem[j];
      }
    }
  }
  out.weights[layer] = std::move(new_out);
  out.validate();
  return out;
}

}  // namespace detail

/// Network surgery with the reweighting update
/// w~_ij = w_ij + sum_r alpha_ir w_rj applied to the next layer's rows.
inline NetworkParams apply_fusion(const NetworkParams& net, const PruneDecision& decision) {
  return detail::surgery(net, decision, true);
}

/// Plain excision: same surgery with alpha treated as zero.
inline NetworkParams prune_without_fusion(const NetworkParams& net,
                                          const PruneDecision& decision) {
  return detail::surgery(net, decision, false);
}

struct PruneDiagnostics {
  double expected_size_raw = 0.0;  // E|Y| of the unscaled kernel L' + eps I
  double kernel_gamma = 1.0;
  double subset_log_det = 0.0;
  double fusion_residual_max = 0.0;  // max_r ||v_r - sum alpha v||_2
  double seconds_activations = 0.0;
  double seconds_kernel = 0.0;
  double seconds_sample = 0.0;
  double seconds_fuse = 0.0;
  double seconds_surgery = 0.0;

  double seconds_total() const {
    return seconds_activations + seconds_kernel + seconds_sample + seconds_fuse + seconds_surgery;
  }
};

struct DivnetResult {
  NetworkParams net;
  PruneDecision decision;
  PruneDiagnostics diagnostics;
};

/// The full pipeline on one hidden layer: activations -> kernel -> diverse
/// subset -> fusion -> surgery.
inline DivnetResult divnet_prune(const NetworkParams& net, const Dataset& data, int layer_index,
                                 const StrategyConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const auto elapsed = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };
  DivnetResult result;
  auto t = clock::now();
  const ActivationMatrix acts =
      layer_activations(net, data, layer_index, cfg.dpp.instance_cap,
                        SeedDeriver(cfg.seed).with("instance_cap").value());
  result.diagnostics.seconds_activations = elapsed(t);

  t = clock::now();
  DppKernel kernel = build_kernel(acts, cfg.dpp.beta, cfg.dpp.epsilon);
  result.diagnostics.expected_size_raw = expected_size(kernel);
  if (cfg.dpp.gamma_mode == DppOptions::GammaMode::paper)
    kernel = rescale_to_k(kernel, cfg.target_k, RescaleMode::paper);
  else if (cfg.dpp.gamma_mode == DppOptions::GammaMode::exact)
    kernel = rescale_to_k(kernel, cfg.target_k, RescaleMode::exact);
  result.diagnostics.kernel_gamma = kernel.gamma;
  result.diagnostics.seconds_kernel = elapsed(t);

  t = clock::now();
  Rng rng(cfg.seed);
  NeuronSubset subset;
  switch (cfg.dpp.sampler) {
    case DppOptions::Sampler::kdpp:
      subset = sample_kdpp(kernel, cfg.target_k, rng);
      break;
    case DppOptions::Sampler::best_of_m:
      subset = sample_best_of_m(kernel, cfg.target_k, cfg.dpp.best_of_m, rng);
      break;
    case DppOptions::Sampler::greedy:
      subset = greedy_map(kernel, cfg.target_k);
      break;
    case DppOptions::Sampler::dpp:
      for (int attempt = 0; attempt < 100; ++attempt) {
        subset = sample_dpp(kernel, rng);
        if (!subset.indices.empty() && subset.indices.size() < kernel.size()) break;
      }
      if (subset.indices.empty() || subset.indices.size() >= kernel.size())
        throw numeric_error("divnet_prune: non-parametric sampling kept none or all neurons");
      break;
  }
  result.diagnostics.subset_log_det = subset.log_det;
  PruneDecision decision = decision_from_kept(layer_index, acts.neuron_count(), subset.indices);
  result.diagnostics.seconds_sample = elapsed(t);

  t = clock::now();
  decision = compute_fusion(acts, std::move(decision), cfg.ridge);
  double residual_max = 0.0;
  for (std::size_t r = 0; r < decision.removed.size(); ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < acts.values.cols(); ++c) {
      double recon = 0.0;
      for (std::size_t a = 0; a < decision.kept.size(); ++a)
        recon += (*decision.alphas)(a, r) *
                 acts.values(static_cast<std::size_t>(decision.kept[a]), c);
      const double diff =
          acts.values(static_cast<std::size_t>(decision.removed[r]), c) - recon;
      sq += diff * diff;
    }
    residual_max = std::max(residual_max, std::sqrt(sq));
  }
  result.diagnostics.fusion_residual_max = residual_max;
  result.diagnostics.seconds_fuse = elapsed(t);

  t = clock::now();
  result.net = apply_fusion(net, decision);
  result.diagnostics.seconds_surgery = elapsed(t);
  result.decision = std::move(decision);
  return result;
}

}  // namespace divnet
