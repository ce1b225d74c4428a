#pragma once

// Test-only reference routes, written without the library's numerics so the
// unit tests compare two independent computations.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Svd {
  Mat u;
  Vec s;
  Mat v;
};

// One-sided (Hestenes) Jacobi SVD: orthogonalize columns of A by plane rotations.
inline Svd jacobi_svd(const Mat& a_in) {
  const bool tall = a_in.rows() >= a_in.cols();
  Mat a = tall ? a_in : Mat(a_in.transpose());
  const Eigen::Index n = a.cols();
  Mat v = Mat::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n - 1; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = a.col(p).squaredNorm();
        const double beta = a.col(q).squaredNorm();
        const double gamma = a.col(p).dot(a.col(q));
        if (std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
          const double x = a(i, p), y = a(i, q);
          a(i, p) = c * x - s * y;
          a(i, q) = s * x + c * y;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double x = v(i, p), y = v(i, q);
          v(i, p) = c * x - s * y;
          v(i, q) = s * x + c * y;
        }
      }
    if (off < 1e-15) break;
  }
  Vec s(n);
  for (Eigen::Index k = 0; k < n; ++k) s(k) = a.col(k).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return s(x) > s(y); });
  Svd out;
  out.s.resize(n);
  out.u = Mat::Zero(a.rows(), n);
  out.v.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    out.s(k) = s(src);
    out.v.col(k) = v.col(src);
    if (s(src) > 0) out.u.col(k) = a.col(src) / s(src);
  }
  if (!tall) std::swap(out.u, out.v);
  return out;
}

inline double spectral_norm(const Mat& a) { return jacobi_svd(a).s(0); }
inline double nuclear_norm(const Mat& a) { return jacobi_svd(a).s.sum(); }

// |U U^T - W W^T| in spectral norm: basis-free subspace distance.
inline double projector_distance(const Mat& u, const Mat& w) {
  return spectral_norm(u * u.transpose() - w * w.transpose());
}

// Projection onto {x >= 0, sum x <= budget} by bisection on the threshold.
inline Vec simplex_project_bisect(const Vec& y, double budget) {
  if (y.cwiseMax(0.0).sum() <= budget) return y.cwiseMax(0.0);
  double lo = 0.0, hi = y.maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if ((y.array() - mid).cwiseMax(0.0).sum() > budget) lo = mid;
    else hi = mid;
  }
  return (y.array() - 0.5 * (lo + hi)).cwiseMax(0.0).matrix();
}

inline Mat random_orthogonal(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Mat g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = nd(rng);
  Eigen::HouseholderQR<Mat> qr(g);
  return qr.householderQ();
}

inline Mat gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Mat g(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) g(i, j) = nd(rng);
  return g;
}

inline Mat random_pmf(int m, int n, std::mt19937_64& rng, double zero_fraction = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat p(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) p(i, j) = u(rng) < zero_fraction ? 0.0 : std::pow(u(rng), 3.0);
  if (p.sum() == 0.0) p(0, 0) = 1.0;
  return p / p.sum();
}

// Pearson r through the raw-moment formula in long double.
inline double pearson_raw(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = x.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += (long double)x[k] * x[k];
    syy += (long double)y[k] * y[k];
    sxy += (long double)x[k] * y[k];
  }
  return static_cast<double>((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

}  // namespace oracle
