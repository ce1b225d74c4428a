#pragma once

// Subspace estimation from unlabeled entry samples: the empirical PMF, its
// truncated SVD, the rescaled side-information matrices built from it, and
// the spectral diagnostics used by the theory checks.

#include <Eigen/QR>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "damc/error.hpp"
#include "damc/linalg.hpp"
#include "damc/rng.hpp"
#include "damc/synthgen.hpp"

namespace damc {

using SparseCounts = Eigen::SparseMatrix<long, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct EmpiricalPMF {
  SparseCounts counts;
  long total = 0;
  int m = 0;
  int n = 0;

  /// O_M = counts / total as a sparse matrix.
  SparseMatrix sparse() const {
    SparseMatrix s = counts.cast<double>();
    s /= static_cast<double>(total);
    return s;
  }

  Matrix dense() const { return Matrix(sparse()); }
};

inline EmpiricalPMF empirical_pmf(std::span<const Entry> samples, int m, int n) {
  if (samples.empty()) throw ArgumentError("empirical_pmf needs at least one sample");
  if (m < 1 || n < 1) throw ArgumentError("dimensions must be positive");
  std::vector<Eigen::Triplet<long>> trips;
  trips.reserve(samples.size());
  for (const Entry& e : samples) {
    if (e.row < 0 || e.row >= m || e.col < 0 || e.col >= n)
      throw ArgumentError("sample (" + std::to_string(e.row) + "," + std::to_string(e.col) + ") out of range");
    trips.emplace_back(e.row, e.col, 1L);
  }
  EmpiricalPMF out;
  out.m = m;
  out.n = n;
  out.total = static_cast<long>(samples.size());
  out.counts.resize(m, n);
  out.counts.setFromTriplets(trips.begin(), trips.end());
  return out;
}

struct SubspaceFactors {
  Matrix u;      // m x d, orthonormal columns
  Vector sigma;  // d, nonincreasing
  Matrix v;      // n x d, orthonormal columns

  int d() const { return static_cast<int>(sigma.size()); }
  Matrix reconstruct() const { return u * sigma.asDiagonal() * v.transpose(); }
};

struct SvdOptions {
  /// Above this min(m, n) the randomized range finder is used.
  int dense_limit = 2000;
  int power_iterations = 10;
  int oversample = 8;
  std::uint64_t seed = 0;
  /// Optional starting basis (n x k) for the randomized path; columns beyond
  /// it are filled with Gaussian draws.
  const Matrix* warm_start = nullptr;
};

namespace detail {

/// Flip each triplet so the largest-magnitude entry of u is positive (lowest index on ties).
inline void canonicalize_signs(Matrix& u, Matrix& v) {
  for (Eigen::Index k = 0; k < u.cols(); ++k) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      const double a = std::abs(u(i, k));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (u(best, k) < 0.0) {
      u.col(k) = -u.col(k);
      v.col(k) = -v.col(k);
    }
  }
}

inline void check_finite(const Matrix& a, const char* what) {
  if (!a.allFinite()) throw NumericalError(std::string("non-finite values in ") + what);
}

inline Matrix orthonormalize(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
}

template <typename Mat>
SubspaceFactors randomized_svd_impl(const Mat& a, int d, const SvdOptions& opt) {
  const Eigen::Index m = a.rows(), n = a.cols();
  const Eigen::Index k = std::min<Eigen::Index>(d + opt.oversample, std::min(m, n));
  Matrix omega(n, k);
  Engine rng = make_engine(opt.seed, "randomized_svd");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Index start = 0;
  if (opt.warm_start != nullptr && opt.warm_start->rows() == n) {
    start = std::min<Eigen::Index>(opt.warm_start->cols(), k);
    omega.leftCols(start) = opt.warm_start->leftCols(start);
  }
  for (Eigen::Index j = start; j < k; ++j)
    for (Eigen::Index i = 0; i < n; ++i) omega(i, j) = normal(rng);

  Matrix q = orthonormalize(a * omega);
  for (int it = 0; it < opt.power_iterations; ++it) {
    Matrix z = orthonormalize(a.transpose() * q);
    q = orthonormalize(a * z);
  }
  Matrix b = q.transpose() * a;  // k x n
  check_finite(b, "randomized range sketch");
  Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw NumericalError("SVD of the range sketch failed to converge (sketch " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  SubspaceFactors f;
  f.u = q * svd.matrixU().leftCols(d);
  f.sigma = svd.singularValues().head(d);
  f.v = svd.matrixV().leftCols(d);
  return f;
}

}  // namespace detail

/// Top-d singular triplets. Dense Golub-Kahan-based SVD up to
/// opt.dense_limit, randomized range finder above it.
inline SubspaceFactors truncated_svd(const Matrix& a, int d, const SvdOptions& opt = {}) {
  const Eigen::Index small = std::min(a.rows(), a.cols());
  if (d < 1 || d > small)
    throw ArgumentError("truncated_svd: d=" + std::to_string(d) + " outside [1, " + std::to_string(small) + "]");
  detail::check_finite(a, "truncated_svd input");
  SubspaceFactors f;
  if (small <= opt.dense_limit) {
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success)
      throw NumericalError("dense SVD failed to converge on a " + std::to_string(a.rows()) + "x" +
                           std::to_string(a.cols()) + " input (Frobenius norm " + std::to_string(a.norm()) + ")");
    f.u = svd.matrixU().leftCols(d);
    f.sigma = svd.singularValues().head(d);
    f.v = svd.matrixV().leftCols(d);
  } else {
    f = detail::randomized_svd_impl(a, d, opt);
  }
  detail::canonicalize_signs(f.u, f.v);
  return f;
}

inline SubspaceFactors truncated_svd(const SparseMatrix& a, int d, const SvdOptions& opt = {}) {
  const Eigen::Index small = std::min(a.rows(), a.cols());
  if (small <= opt.dense_limit) return truncated_svd(Matrix(a), d, opt);
  if (d < 1 || d > small) throw ArgumentError("truncated_svd: d out of range");
  SubspaceFactors f = detail::randomized_svd_impl(a, d, opt);
  detail::canonicalize_signs(f.u, f.v);
  return f;
}

/// Randomized top-d SVD regardless of size (used where an approximate
/// low-rank SVD is enough, e.g. inside SoftImpute).
inline SubspaceFactors randomized_svd(const Matrix& a, int d, const SvdOptions& opt = {}) {
  const Eigen::Index small = std::min(a.rows(), a.cols());
  if (d < 1 || d > small) throw ArgumentError("randomized_svd: d out of range");
  detail::check_finite(a, "randomized_svd input");
  SubspaceFactors f = detail::randomized_svd_impl(a, d, opt);
  detail::canonicalize_signs(f.u, f.v);
  return f;
}

struct SideInfo {
  Matrix x;  // m x d
  Matrix y;  // n x d

  int d() const { return static_cast<int>(x.cols()); }
  int m() const { return static_cast<int>(x.rows()); }
  int n() const { return static_cast<int>(y.rows()); }
};

inline SideInfo side_info(const SubspaceFactors& f, int m, int n) {
  if (f.u.rows() != m || f.v.rows() != n) throw ArgumentError("side_info: factor shapes do not match m, n");
  const double d = static_cast<double>(f.d());
  return SideInfo{std::sqrt(m / d) * f.u, std::sqrt(n / d) * f.v};
}

struct ProcrustesResult {
  double distance = 0.0;
  Matrix rotation;  // d x d orthogonal, minimizing ||u R - u_star||
};

/// min over orthogonal R of ||u R - u_star|| (spectral norm); R is the polar
/// factor of u^T u_star.
inline ProcrustesResult procrustes_distance(const Matrix& u, const Matrix& u_star) {
  if (u.rows() != u_star.rows() || u.cols() != u_star.cols())
    throw ArgumentError("procrustes_distance: shape mismatch");
  Eigen::JacobiSVD<Matrix> svd(u.transpose() * u_star, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ProcrustesResult r;
  r.rotation = svd.matrixU() * svd.matrixV().transpose();
  r.distance = spectral_norm(u * r.rotation - u_star);
  return r;
}

struct SpectralDiagnostics {
  double spectral_norm = 0.0;
  double eigengap = 0.0;   // sigma_d - sigma_{d+1}
  double condition = 0.0;  // spectral_norm / eigengap
  Vector leading_singular_values;  // sigma_1 .. sigma_{min(d+1, min(m,n))}
};

inline void check_pmf(const Matrix& pmf, double tol = 1e-9) {
  if (pmf.size() == 0) throw ArgumentError("empty PMF");
  if ((pmf.array() < 0.0).any() || !pmf.allFinite()) throw ArgumentError("PMF has negative or non-finite entries");
  if (std::abs(pmf.sum() - 1.0) > tol) throw ArgumentError("PMF does not sum to one (sum " + std::to_string(pmf.sum()) + ")");
}

inline SpectralDiagnostics spectral_diagnostics(const Matrix& pmf, int d) {
  check_pmf(pmf);
  const int small = static_cast<int>(std::min(pmf.rows(), pmf.cols()));
  if (d < 1 || d > small) throw ArgumentError("spectral_diagnostics: d out of range");
  const Vector s = singular_values(pmf);
  SpectralDiagnostics out;
  out.spectral_norm = s(0);
  const double next = d < small ? s(d) : 0.0;
  out.eigengap = s(d - 1) - next;
  out.leading_singular_values = s.head(std::min(d + 1, small));
  if (!(out.eigengap >= 1e-14))
    throw DegenerateEigengapError("eigengap sigma_d - sigma_{d+1} = " + std::to_string(out.eigengap) + " at d=" +
                                  std::to_string(d));
  out.condition = out.spectral_norm / out.eigengap;
  return out;
}

/// Largest row or column marginal of a PMF.
inline double max_marginal(const Matrix& pmf) {
  return std::max(pmf.rowwise().sum().maxCoeff(), pmf.colwise().sum().maxCoeff());
}

/// High-probability bound on max(dist(U, U*), dist(V, V*)) for the rank-d SVD
/// of the empirical PMF built from `samples` draws.
inline double subspace_recovery_bound(double p_star, double eigengap, double samples, int m, int n, double delta) {
  const double lg = std::log((m + n) / delta);
  return 2.0 / eigengap * (std::sqrt(16.0 * p_star / (3.0 * samples)) * std::sqrt(lg) + 16.0 / samples * lg);
}

/// Sample size above which subspace_recovery_bound holds.
inline double subspace_recovery_min_samples(double p_star, double eigengap, int m, int n, double delta) {
  const double lg = std::log((m + n) / delta);
  const double c = 4.0 / (eigengap * (2.0 - std::sqrt(2.0)));
  return lg * (c * c * 16.0 * p_star / 3.0 + 32.0 / (eigengap * (2.0 - std::sqrt(2.0))));
}

}  // namespace damc
