#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "divnet/errors.hpp"
#include "divnet/matrix.hpp"

namespace divnet {

/// Eigendecomposition of a real symmetric matrix: A = Q diag(values) Q^T,
/// eigenvalues ascending, eigenvector i in column i of `vectors`.
struct SymEig {
  std::vector<double> values;
  Matrix vectors;
};

namespace detail {

constexpr int kEigMaxSweeps = 64;

/// Householder reduction of a symmetric matrix to tridiagonal form,
/// accumulating the orthogonal transform in z (EISPACK tred2).
inline void tridiagonalize(Matrix& z, std::vector<double>& d, std::vector<double>& e) {
  const std::size_t n = z.rows();
  for (std::size_t i = n - 1; i >= 1; --i) {
    const std::size_t l = i - 1;
    double h = 0.0;
    if (l > 0) {
      double scale = 0.0;
      for (std::size_t k = 0; k <= l; ++k) scale += std::abs(z(i, k));
      if (scale == 0.0) {
        e[i] = z(i, l);
      } else {
        for (std::size_t k = 0; k <= l; ++k) {
          z(i, k) /= scale;
          h += z(i, k) * z(i, k);
        }
        double f = z(i, l);
        double g = (f >= 0.0) ? -std::sqrt(h) : std::sqrt(h);
        e[i] = scale * g;
        h -= f * g;
        z(i, l) = f - g;
        f = 0.0;
        for (std::size_t j = 0; j <= l; ++j) {
          z(j, i) = z(i, j) / h;
          g = 0.0;
          for (std::size_t k = 0; k <= j; ++k) g += z(j, k) * z(i, k);
          for (std::size_t k = j + 1; k <= l; ++k) g += z(k, j) * z(i, k);
          e[j] = g / h;
          f += e[j] * z(i, j);
        }
        const double hh = f / (h + h);
        for (std::size_t j = 0; j <= l; ++j) {
          f = z(i, j);
          g = e[j] - hh * f;
          e[j] = g;
          for (std::size_t k = 0; k <= j; ++k) z(j, k) -= f * e[k] + g * z(i, k);
        }
      }
    } else {
      e[i] = z(i, l);
    }
    d[i] = h;
  }
  d[0] = 0.0;
  e[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] != 0.0) {
      for (std::size_t j = 0; j < i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k < i; ++k) g += z(i, k) * z(k, j);
        for (std::size_t k = 0; k < i; ++k) z(k, j) -= g * z(k, i);
      }
    }
    d[i] = z(i, i);
    z(i, i) = 1.0;
    for (std::size_t j = 0; j < i; ++j) z(j, i) = z(i, j) = 0.0;
  }
}

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix with
/// accumulated eigenvectors (EISPACK tql2 / NR tqli).
inline void tridiagonal_ql(std::vector<double>& d, std::vector<double>& e, Matrix& z) {
  const std::size_t n = d.size();
  if (n == 1) return;
  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
      }
      if (m != l) {
        if (iter++ == kEigMaxSweeps)
          throw numeric_error("sym_eig: QL iteration did not converge within " +
                              std::to_string(kEigMaxSweeps) + " sweeps");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        for (std::size_t i = m; i-- > l;) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          for (std::size_t k = 0; k < n; ++k) {
            f = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * f;
            z(k, i) = c * z(k, i) - s * f;
          }
        }
        if (r == 0.0 && m - l > 1) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

}  // namespace detail

/// Symmetric eigendecomposition via Householder tridiagonalization followed
/// by implicit-shift QL. Eigenvalues ascending; eigenvectors orthonormal.
///
/// Throws precondition_error for non-square input or asymmetry beyond
/// 1e-10 per entry, numeric_error if the QL iteration fails to converge.
inline SymEig sym_eig(const Matrix& a) {
  const std::size_t n = a.rows();
  if (n == 0 || a.cols() != n) throw precondition_error("sym_eig: matrix must be square and nonempty");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-10)
        throw precondition_error("sym_eig: matrix is not symmetric within 1e-10");
  require_finite(a, "sym_eig");

  SymEig out;
  out.vectors = a;
  // Symmetrize exactly so the decomposition sees one consistent matrix.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (out.vectors(i, j) + out.vectors(j, i));
      out.vectors(i, j) = out.vectors(j, i) = v;
    }
  out.values.assign(n, 0.0);
  std::vector<double> e(n, 0.0);
  if (n > 1) {
    detail::tridiagonalize(out.vectors, out.values, e);
    detail::tridiagonal_ql(out.values, e, out.vectors);
  } else {
    out.values[0] = a(0, 0);
    out.vectors(0, 0) = 1.0;
  }

  // Sort eigenpairs ascending.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return out.values[i] < out.values[j]; });
  std::vector<double> sorted_vals(n);
  Matrix sorted_vecs(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    sorted_vals[c] = out.values[order[c]];
    for (std::size_t r = 0; r < n; ++r) sorted_vecs(r, c) = out.vectors(r, order[c]);
  }
  out.values = std::move(sorted_vals);
  out.vectors = std::move(sorted_vecs);
  return out;
}

namespace detail {

/// In-place Householder QR with column pivoting on `a` (m x n).
/// Returns the column permutation and the numerical rank; the transform is
/// applied to `b` as well, so on exit b holds Q^T * b.
inline std::size_t qr_pivoted(Matrix& a, Matrix& b, std::vector<std::size_t>& piv) {
  const std::size_t m = a.rows(), n = a.cols();
  piv.resize(n);
  std::iota(piv.begin(), piv.end(), std::size_t{0});
  const std::size_t steps = std::min(m, n);
  double r00 = 0.0;
  std::size_t rank = 0;

  for (std::size_t k = 0; k < steps; ++k) {
    // Pivot: bring the column with the largest remaining norm to position k.
    std::size_t best = k;
    double best_norm = -1.0;
    for (std::size_t j = k; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += a(i, j) * a(i, j);
      if (s > best_norm) {
        best_norm = s;
        best = j;
      }
    }
    if (best != k) {
      for (std::size_t i = 0; i < m; ++i) std::swap(a(i, k), a(i, best));
      std::swap(piv[k], piv[best]);
    }

    // Householder vector for column k.
    double norm = std::sqrt(best_norm);
    if (k == 0) r00 = norm;
    const double tol = std::max(m, n) * std::numeric_limits<double>::epsilon() * r00;
    if (norm <= tol) break;  // remaining block is numerically zero
    ++rank;

    const double alpha = (a(k, k) >= 0.0) ? -norm : norm;
    std::vector<double> v(m - k);
    v[0] = a(k, k) - alpha;
    for (std::size_t i = k + 1; i < m; ++i) v[i - k] = a(i, k);
    double vtv = 0.0;
    for (double x : v) vtv += x * x;
    a(k, k) = alpha;
    for (std::size_t i = k + 1; i < m; ++i) a(i, k) = 0.0;
    if (vtv == 0.0) continue;

    const double two_over_vtv = 2.0 / vtv;
    for (std::size_t j = k + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < m; ++i) dot += v[i - k] * a(i, j);
      const double f = dot * two_over_vtv;
      for (std::size_t i = k; i < m; ++i) a(i, j) -= f * v[i - k];
    }
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < m; ++i) dot += v[i - k] * b(i, j);
      const double f = dot * two_over_vtv;
      for (std::size_t i = k; i < m; ++i) b(i, j) -= f * v[i - k];
    }
  }
  return rank;
}

/// Plain Householder QR (no pivoting) of `a` (m x n, m >= n, full rank
/// assumed by the caller); returns the compact Q factors applied on the fly.
/// Used for the right-hand factorization inside the minimum-norm solve.
struct ThinQr {
  Matrix qr;                  // packed Householder vectors below the diagonal
  std::vector<double> tau_r;  // diagonal entries of R
};

inline ThinQr qr_factor(Matrix a) {
  const std::size_t m = a.rows(), n = a.cols();
  ThinQr f;
  f.tau_r.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t i = k; i < m; ++i) s += a(i, k) * a(i, k);
    const double norm = std::sqrt(s);
    const double alpha = (a(k, k) >= 0.0) ? -norm : norm;
    double v0 = a(k, k) - alpha;
    double vtv = v0 * v0;
    for (std::size_t i = k + 1; i < m; ++i) vtv += a(i, k) * a(i, k);
    f.tau_r[k] = alpha;
    if (vtv > 0.0) {
      const double two_over_vtv = 2.0 / vtv;
      for (std::size_t j = k + 1; j < n; ++j) {
        double dot = v0 * a(k, j);
        for (std::size_t i = k + 1; i < m; ++i) dot += a(i, k) * a(i, j);
        const double fct = dot * two_over_vtv;
        a(k, j) -= fct * v0;
        for (std::size_t i = k + 1; i < m; ++i) a(i, j) -= fct * a(i, k);
      }
    }
    a(k, k) = v0;  // keep the Householder vector; alpha lives in tau_r
  }
  f.qr = std::move(a);
  return f;
}

/// y = Q * [w; 0] for the factorization above (apply reflectors in reverse).
inline std::vector<double> qr_apply_q(const ThinQr& f, const std::vector<double>& w) {
  const std::size_t m = f.qr.rows(), n = f.qr.cols();
  std::vector<double> y(m, 0.0);
  std::copy(w.begin(), w.end(), y.begin());
  for (std::size_t k = n; k-- > 0;) {
    double vtv = 0.0;
    for (std::size_t i = k; i < m; ++i) vtv += f.qr(i, k) * f.qr(i, k);
    if (vtv == 0.0) continue;
    double dot = 0.0;
    for (std::size_t i = k; i < m; ++i) dot += f.qr(i, k) * y[i];
    const double fct = 2.0 * dot / vtv;
    for (std::size_t i = k; i < m; ++i) y[i] -= fct * f.qr(i, k);
  }
  return y;
}

}  // namespace detail

/// Least-squares solve: returns X (n x p) minimizing ||A X - B||_F^2 +
/// ridge * ||X||_F^2.
///
/// ridge == 0 uses QR with column pivoting plus a complete orthogonal
/// decomposition, so rank-deficient systems yield the minimum-norm
/// minimizer. ridge > 0 solves the augmented system [A; sqrt(ridge) I],
/// which is always full rank and therefore strictly unique.
inline Matrix lstsq(const Matrix& a, const Matrix& b, double ridge = 0.0) {
  if (a.rows() == 0 || a.cols() == 0) throw precondition_error("lstsq: A must be nonempty");
  if (b.rows() != a.rows()) throw precondition_error("lstsq: A and B row counts differ");
  if (ridge < 0.0) throw precondition_error("lstsq: ridge must be nonnegative");
  const std::size_t n = a.cols(), p = b.cols();

  Matrix work_a = a;
  Matrix work_b = b;
  if (ridge > 0.0) {  // augmented system [A; sqrt(ridge) I] X = [B; 0]
    const double sr = std::sqrt(ridge);
    Matrix aug(a.rows() + n, n);
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) aug(i, j) = a(i, j);
    for (std::size_t j = 0; j < n; ++j) aug(a.rows() + j, j) = sr;
    Matrix bug(a.rows() + n, p);
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < p; ++j) bug(i, j) = b(i, j);
    work_a = std::move(aug);
    work_b = std::move(bug);
  }

  std::vector<std::size_t> piv;
  const std::size_t rank = detail::qr_pivoted(work_a, work_b, piv);
  Matrix x(n, p);
  if (rank == 0) return x;  // A numerically zero: minimum-norm solution is 0

  if (rank == n) {
    // Full column rank: ordinary back substitution on R x = Q^T b.
    for (std::size_t col = 0; col < p; ++col) {
      for (std::size_t i = rank; i-- > 0;) {
        double s = work_b(i, col);
        for (std::size_t j = i + 1; j < n; ++j) s -= work_a(i, j) * x(piv[j], col);
        x(piv[i], col) = s / work_a(i, i);
      }
    }
    return x;
  }

  // Rank-deficient: complete orthogonal decomposition. Factor T^T = Z S for
  // the leading rank x n block T of R, then the minimum-norm solution of
  // T y = c is y = Z w with S^T w = c.
  Matrix t_t(n, rank);
  for (std::size_t i = 0; i < rank; ++i)
    for (std::size_t j = i; j < n; ++j) t_t(j, i) = work_a(i, j);
  const detail::ThinQr zf = detail::qr_factor(std::move(t_t));
  for (std::size_t col = 0; col < p; ++col) {
    // Forward substitution on S^T w = c, where S is the upper-triangular
    // factor of T^T = Z S: S(i,i) = tau_r[i], S(i,j) for j > i in zf.qr(i,j).
    std::vector<double> w(rank, 0.0);
    for (std::size_t i = 0; i < rank; ++i) {
      double s = work_b(i, col);
      for (std::size_t j = 0; j < i; ++j) s -= zf.qr(j, i) * w[j];
      w[i] = s / zf.tau_r[i];
    }
    const std::vector<double> y = detail::qr_apply_q(zf, w);
    for (std::size_t j = 0; j < n; ++j) x(piv[j], col) = y[j];
  }
  return x;
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
inline Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw precondition_error("cholesky: matrix must be square");
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 0.0) throw numeric_error("cholesky: matrix is not positive definite");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

/// log(det(A)) for symmetric positive-definite A, via Cholesky.
inline double logdet_spd(const Matrix& a) {
  if (a.rows() == 0) return 0.0;
  const Matrix l = cholesky(a);
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

}  // namespace divnet
