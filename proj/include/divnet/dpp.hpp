#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "divnet/activation.hpp"
#include "divnet/errors.hpp"
#include "divnet/linalg.hpp"
#include "divnet/matrix.hpp"
#include "divnet/rng.hpp"

namespace divnet {

/// Similarity kernel over a layer's neurons. `matrix` holds the scaled
/// kernel gamma * (L' + epsilon I) with L'_ij = exp(-beta ||v_i - v_j||^2);
/// the eigendecomposition is cached because every sampler needs it.
struct DppKernel {
  Matrix matrix;
  double beta = 0.0;
  double epsilon = 0.0;
  double gamma = 1.0;
  SymEig eig;

  std::size_t size() const { return matrix.rows(); }

  double min_eigenvalue() const { return eig.values.front(); }

  void validate() const {
    if (matrix.rows() != matrix.cols() || matrix.rows() == 0)
      throw precondition_error("DppKernel: matrix must be square and nonempty");
    if (min_eigenvalue() <= 0.0 || min_eigenvalue() < gamma * epsilon - 1e-9)
      throw numeric_error("DppKernel: kernel lost strict positive definiteness");
  }
};

/// Wrap an arbitrary symmetric positive-definite matrix as a kernel
/// (beta/epsilon metadata zeroed). build_kernel is the RBF route.
inline DppKernel kernel_from_matrix(Matrix m) {
  DppKernel k;
  k.matrix = std::move(m);
  k.eig = sym_eig(k.matrix);
  k.validate();
  return k;
}

/// A sampled subset of neuron indices with its (scaled-kernel) log det L_Y.
struct NeuronSubset {
  std::vector<int> indices;  // sorted ascending
  double log_det = 0.0;      // 0 for the empty subset (det of empty matrix is 1)
};

inline double subset_log_det(const DppKernel& kernel, const std::vector<int>& indices) {
  if (indices.empty()) return 0.0;
  Matrix sub(indices.size(), indices.size());
  for (std::size_t a = 0; a < indices.size(); ++a)
    for (std::size_t b = 0; b < indices.size(); ++b)
      sub(a, b) = kernel.matrix(static_cast<std::size_t>(indices[a]),
                                static_cast<std::size_t>(indices[b]));
  return logdet_spd(sub);
}

/// Gaussian RBF kernel over neuron activation rows (plus the diagonal
/// perturbation that enforces strict positive definiteness). A missing beta
/// means the fixed default 10 / instance_count.
inline DppKernel build_kernel(const ActivationMatrix& acts, std::optional<double> beta = {},
                              double epsilon = 0.01) {
  const std::size_t n = acts.values.rows();
  const std::size_t t = acts.values.cols();
  if (n < 1 || t < 1) throw precondition_error("build_kernel: empty activation matrix");
  if (!acts.values.all_finite())
    throw precondition_error("build_kernel: non-finite activation values");
  if (epsilon < 0.0) throw precondition_error("build_kernel: epsilon must be >= 0");
  const double b = beta.value_or(10.0 / static_cast<double>(t));
  if (!(b > 0.0)) throw precondition_error("build_kernel: beta must be > 0");

  DppKernel k;
  k.beta = b;
  k.epsilon = epsilon;
  k.gamma = 1.0;
  k.matrix = Matrix(n, n);

  std::vector<double> sq_norm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = acts.values.row_ptr(i);
    double s = 0.0;
    for (std::size_t c = 0; c < t; ++c) s += row[c] * row[c];
    sq_norm[i] = s;
  }
  for (std::size_t i = 0; i < n; ++i) {
    k.matrix(i, i) = 1.0 + epsilon;
    const double* vi = acts.values.row_ptr(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* vj = acts.values.row_ptr(j);
      double dot = 0.0;
      for (std::size_t c = 0; c < t; ++c) dot += vi[c] * vj[c];
      const double d2 = std::max(0.0, sq_norm[i] + sq_norm[j] - 2.0 * dot);
      const double v = std::exp(-b * d2);
      k.matrix(i, j) = k.matrix(j, i) = v;
    }
  }
  k.eig = sym_eig(k.matrix);
  k.validate();
  return k;
}

/// Same kernel scaled by `factor`; reuses the cached eigenvectors since
/// eigenvalues scale linearly.
inline DppKernel scale_kernel(const DppKernel& kernel, double factor) {
  if (!(factor > 0.0)) throw precondition_error("scale_kernel: factor must be > 0");
  DppKernel out = kernel;
  out.gamma *= factor;
  for (auto& v : out.matrix.data()) v *= factor;
  for (auto& l : out.eig.values) l *= factor;
  return out;
}

/// E[|Y|] = sum_i lambda_i / (1 + lambda_i) over the current kernel.
inline double expected_size(const DppKernel& kernel) {
  double s = 0.0;
  for (double l : kernel.eig.values) s += l / (1.0 + l);
  return s;
}

enum class RescaleMode { paper, exact };

/// Rescale the kernel so the expected DPP sample size approaches `target`.
/// `paper` applies the closed-form gamma = (k/(n-k)) * ((n-k')/k'); `exact`
/// bisects the scale factor until expected_size matches within 1e-6.
inline DppKernel rescale_to_k(const DppKernel& kernel, std::size_t target, RescaleMode mode) {
  const std::size_t n = kernel.size();
  if (target == 0 || target >= n)
    throw precondition_error("rescale_to_k: target must be in (0, n)");
  if (mode == RescaleMode::paper) {
    const double k_prime = expected_size(kernel);
    const double kd = static_cast<double>(target);
    const double nd = static_cast<double>(n);
    const double factor = (kd / (nd - kd)) * ((nd - k_prime) / k_prime);
    return scale_kernel(kernel, factor);
  }

  auto size_at = [&](double c) {
    double s = 0.0;
    for (double l : kernel.eig.values) s += c * l / (1.0 + c * l);
    return s;
  };
  double lo = 1e-12, hi = 1e12;
  const double want = static_cast<double>(target);
  if (size_at(lo) > want || size_at(hi) < want)
    throw numeric_error("rescale_to_k: bisection bracket does not contain the target");
  for (int iter = 0; iter < 500; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double s = size_at(mid);
    if (std::abs(s - want) < 1e-6) return scale_kernel(kernel, mid);
    (s < want ? lo : hi) = mid;
  }
  throw numeric_error("rescale_to_k: bisection failed to converge");
}

namespace detail {

// Phase 2 of the spectral sampler: the selected eigenvectors span a
// projection DPP with marginal kernel K = V V^T, sampled by the chain rule
// with an incremental Gram-Schmidt (Cholesky) factorization of K over the
// chosen items. mass[i] tracks the conditional inclusion weight of item i;
// each accepted item contributes one factor column and an O(n k) update,
// so a draw costs O(n k^2) in total.
inline std::vector<int> sample_from_eigenvectors(const Matrix& eigvecs,
                                                 const std::vector<std::size_t>& selected,
                                                 Rng& rng) {
  const std::size_t n = eigvecs.rows();
  const std::size_t k = selected.size();
  std::vector<int> result;
  if (k == 0) return result;

  Matrix v(n, k);  // rows: item feature vectors in the selected eigenbasis
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) v(r, c) = eigvecs(r, selected[c]);

  std::vector<double> mass(n, 0.0);  // squared row norms, shrunk per step
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = v.row_ptr(r);
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += row[c] * row[c];
    mass[r] = s;
  }

  Matrix coef(n, k);  // Gram-Schmidt coefficients of K against chosen items
  std::vector<bool> taken(n, false);
  for (std::size_t step = 0; step < k; ++step) {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r)
      if (!taken[r]) total += mass[r];
    const double u = rng.uniform() * total;
    std::size_t item = n;
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (taken[r]) continue;
      acc += mass[r];
      item = r;
      if (u < acc) break;
    }
    if (item == n) throw numeric_error("dpp sampler: probability mass exhausted");
    taken[item] = true;
    result.push_back(static_cast<int>(item));

    const double denom = std::sqrt(std::max(mass[item], 1e-300));
    const double* vj = v.row_ptr(item);
    const double* cj = coef.row_ptr(item);
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) {
        coef(i, step) = 0.0;
        continue;
      }
      const double* vi = v.row_ptr(i);
      double dot = 0.0;
      for (std::size_t c = 0; c < k; ++c) dot += vi[c] * vj[c];
      const double* ci = coef.row_ptr(i);
      double corr = 0.0;
      for (std::size_t s = 0; s < step; ++s) corr += ci[s] * cj[s];
      const double value = (dot - corr) / denom;
      coef(i, step) = value;
      mass[i] = std::max(0.0, mass[i] - value * value);
    }
    mass[item] = 0.0;
  }
  std::sort(result.begin(), result.end());
  return result;
}

// Scaled table of elementary symmetric polynomials. ratios[j][l] holds
// P(select eigenvector j | l slots left) = lambda_j e_{l-1}^{j-1} / e_l^j.
// Eigenvalues are pre-scaled by the inverse median and every column of the
// e-table is renormalized, so the recurrence neither overflows nor
// underflows even for large layers; both transformations cancel in the
// selection ratios.
inline std::vector<std::vector<double>> kdpp_selection_ratios(const std::vector<double>& lambda,
                                                              std::size_t k) {
  const std::size_t n = lambda.size();
  std::vector<double> lam = lambda;
  {
    std::vector<double> s = lam;
    std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n / 2), s.end());
    const double med = s[n / 2];
    const double c = (med > 0.0 && std::isfinite(med)) ? 1.0 / med : 1.0;
    for (auto& l : lam) l *= c;
  }

  // e[l] = scaled e_l over the first j eigenvalues, updated in place
  std::vector<double> e(k + 1, 0.0), prev(k + 1, 0.0);
  e[0] = 1.0;
  std::vector<std::vector<double>> ratios(n + 1, std::vector<double>(k + 1, 0.0));
  for (std::size_t j = 1; j <= n; ++j) {
    prev = e;
    double column_max = 0.0;
    for (std::size_t l = std::min(j, k) + 1; l-- > 1;) {
      e[l] = prev[l] + lam[j - 1] * prev[l - 1];
      column_max = std::max(column_max, e[l]);
    }
    column_max = std::max(column_max, e[0]);
    for (std::size_t l = 1; l <= std::min(j, k); ++l) {
      ratios[j][l] = (e[l] > 0.0) ? lam[j - 1] * prev[l - 1] / e[l] : 1.0;
    }
    if (column_max > 0.0 && (column_max > 1e100 || column_max < 1e-100)) {
      const double inv = 1.0 / column_max;
      for (auto& x : e) x *= inv;
      // note: ratios already recorded for this column; subsequent columns
      // use the rescaled values consistently because the recurrence is
      // homogeneous of degree one in the previous column.
    }
  }
  return ratios;
}

}  // namespace detail

/// Exact non-parametric DPP sample: P(Y) = det(L_Y) / det(L + I).
/// Spectral two-phase sampler; deterministic under the rng state.
inline NeuronSubset sample_dpp(const DppKernel& kernel, Rng& rng) {
  std::vector<std::size_t> selected;
  for (std::size_t i = 0; i < kernel.eig.values.size(); ++i) {
    const double l = kernel.eig.values[i];
    if (rng.uniform() < l / (1.0 + l)) selected.push_back(i);
  }
  NeuronSubset out;
  out.indices = detail::sample_from_eigenvectors(kernel.eig.vectors, selected, rng);
  out.log_det = subset_log_det(kernel, out.indices);
  return out;
}

/// Exact k-DPP sample: P(Y) proportional to det(L_Y) over |Y| = k.
inline NeuronSubset sample_kdpp(const DppKernel& kernel, std::size_t k, Rng& rng) {
  const std::size_t n = kernel.size();
  if (k < 1 || k > n) throw precondition_error("sample_kdpp: size must be in [1, n]");
  const auto ratios = detail::kdpp_selection_ratios(kernel.eig.values, k);
  std::vector<std::size_t> selected;
  std::size_t remaining = k;
  for (std::size_t j = n; j >= 1 && remaining > 0; --j) {
    if (j == remaining || rng.uniform() < ratios[j][remaining]) {
      selected.push_back(j - 1);
      --remaining;
    }
  }
  if (remaining != 0) throw numeric_error("sample_kdpp: eigenvector selection failed");
  std::reverse(selected.begin(), selected.end());
  NeuronSubset out;
  out.indices = detail::sample_from_eigenvectors(kernel.eig.vectors, selected, rng);
  out.log_det = subset_log_det(kernel, out.indices);
  return out;
}

/// Draw m k-DPP samples and keep the most likely one (largest det L_Y);
/// ties resolve to the earliest draw.
inline NeuronSubset sample_best_of_m(const DppKernel& kernel, std::size_t k, std::size_t m,
                                     Rng& rng) {
  if (m < 1) throw precondition_error("sample_best_of_m: m must be >= 1");
  NeuronSubset best = sample_kdpp(kernel, k, rng);
  for (std::size_t i = 1; i < m; ++i) {
    NeuronSubset cand = sample_kdpp(kernel, k, rng);
    if (cand.log_det > best.log_det) best = std::move(cand);
  }
  return best;
}

/// Deterministic greedy approximation of the size-k DPP mode: repeatedly add
/// the neuron with the largest determinant gain (incremental Cholesky);
/// ties resolve to the lowest index.
inline NeuronSubset greedy_map(const DppKernel& kernel, std::size_t k) {
  const std::size_t n = kernel.size();
  if (k < 1 || k > n) throw precondition_error("greedy_map: size must be in [1, n]");
  std::vector<int> chosen;
  std::vector<bool> in_set(n, false);
  Matrix chol(k, k);  // growing lower-triangular factor of L_Y
  double log_det = 0.0;

  for (std::size_t step = 0; step < k; ++step) {
    double best_gain = -std::numeric_limits<double>::infinity();
    std::size_t best_idx = n;
    std::vector<double> best_row;
    for (std::size_t i = 0; i < n; ++i) {
      if (in_set[i]) continue;
      // forward-substitute y = chol^-1 L[chosen, i]
      std::vector<double> y(step);
      for (std::size_t a = 0; a < step; ++a) {
        double s = kernel.matrix(static_cast<std::size_t>(chosen[a]), i);
        for (std::size_t b = 0; b < a; ++b) s -= chol(a, b) * y[b];
        y[a] = s / chol(a, a);
      }
      double gain = kernel.matrix(i, i);
      for (double x : y) gain -= x * x;
      if (gain > best_gain) {
        best_gain = gain;
        best_idx = i;
        best_row = std::move(y);
      }
    }
    if (best_idx == n || best_gain <= 0.0)
      throw numeric_error("greedy_map: no positive determinant gain (kernel not PD?)");
    for (std::size_t b = 0; b < step; ++b) chol(step, b) = best_row[b];
    chol(step, step) = std::sqrt(best_gain);
    log_det += std::log(best_gain);
    in_set[best_idx] = true;
    chosen.push_back(static_cast<int>(best_idx));
  }
  NeuronSubset out;
  out.indices = std::move(chosen);
  std::sort(out.indices.begin(), out.indices.end());
  out.log_det = log_det;
  return out;
}

/// Exhaustive subset probabilities, the validation oracle for the samplers.
/// Without `size`: P(Y) = det(L_Y)/det(L+I) over all 2^n subsets. With
/// `size`: the k-DPP conditional. Refuses n > 16.
inline std::vector<std::pair<std::vector<int>, double>> enumerate_dpp(
    const DppKernel& kernel, std::optional<std::size_t> size = {}) {
  const std::size_t n = kernel.size();
  if (n > 16) throw precondition_error("enumerate_dpp: refused for n > 16");
  std::vector<std::pair<std::vector<int>, double>> out;
  std::vector<double> log_weights;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) idx.push_back(static_cast<int>(i));
    if (size && idx.size() != *size) continue;
    log_weights.push_back(subset_log_det(kernel, idx));
    out.emplace_back(std::move(idx), 0.0);
  }
  double log_norm;
  if (size) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double w : log_weights) mx = std::max(mx, w);
    double s = 0.0;
    for (double w : log_weights) s += std::exp(w - mx);
    log_norm = mx + std::log(s);
  } else {
    log_norm = 0.0;
    for (double l : kernel.eig.values) log_norm += std::log1p(l);
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].second = std::exp(log_weights[i] - log_norm);
  return out;
}

// --- kernel container --------------------------------------------------------
//
// Text format for offline inspection: a two-line header followed by n rows
// of n entries. %.17g round-trips doubles exactly.

inline void save_kernel(const DppKernel& kernel, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw format_error(path + ": cannot open for writing");
  char buf[160];
  os << "divnet-kernel v1\n";
  std::snprintf(buf, sizeof buf, "n=%zu beta=%.17g epsilon=%.17g gamma=%.17g\n", kernel.size(),
                kernel.beta, kernel.epsilon, kernel.gamma);
  os << buf;
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    for (std::size_t j = 0; j < kernel.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", kernel.matrix(i, j));
      os << buf << (j + 1 < kernel.size() ? " " : "\n");
    }
  }
  if (!os) throw format_error(path + ": write failed");
}

inline DppKernel load_kernel(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw format_error(path + ": cannot open file");
  std::string line;
  if (!std::getline(is, line) || line != "divnet-kernel v1")
    throw format_error(path + ": bad kernel header");
  if (!std::getline(is, line)) throw format_error(path + ": missing kernel parameters");
  DppKernel k;
  std::size_t n = 0;
  if (std::sscanf(line.c_str(), "n=%zu beta=%lg epsilon=%lg gamma=%lg", &n, &k.beta, &k.epsilon,
                  &k.gamma) != 4)
    throw format_error(path + ": unparseable kernel parameters: " + line);
  if (n == 0) throw format_error(path + ": kernel size must be >= 1");
  k.matrix = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw format_error(path + ": truncated at row " + std::to_string(i));
    std::istringstream ss(line);
    for (std::size_t j = 0; j < n; ++j)
      if (!(ss >> k.matrix(i, j)))
        throw format_error(path + ": row " + std::to_string(i) + " has fewer than " +
                           std::to_string(n) + " entries");
  }
  k.eig = sym_eig(k.matrix);
  k.validate();
  return k;
}

}  // namespace divnet
