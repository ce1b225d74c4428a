#pragma once

// Assumption constants of a (PMF, side information) pair and the four-term
// generalization bound for predictors X * core * Y^T with a nuclear budget on
// the core.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "damc/error.hpp"
#include "damc/imc.hpp"
#include "damc/linalg.hpp"
#include "damc/subspace.hpp"

namespace damc {

struct AssumptionConstants {
  double kappa1 = 1.0;        // max(max_i p_i m, max_j q_j n)
  double kappa2 = 1.0;        // tight constant in |X| <= x sqrt(kappa2 m/d), |Y| <= y sqrt(kappa2 n/d)
  double kappa_star = 1.0;    // |P| / eigengap
  double gamma = 1.0;         // mn max P_ij
  double p_star = 1.0;        // max marginal
  double x_star = 1.0;        // max row norm of X*
  double y_star = 1.0;        // max row norm of Y*
  double script_p_star = 1.0; // max(sqrt(n/m) x*, sqrt(m/n) y*)
  double r = 1.0;             // budget^2 / d^2
  double spectral_norm = 0.0;
  double eigengap = 0.0;
  int d = 1;
  double nuclear_budget = 1.0;
};

inline AssumptionConstants assumption_constants(const Matrix& pmf, const Matrix& x_star, const Matrix& y_star,
                                                double nuclear_budget, int d) {
  check_pmf(pmf);
  const auto m = pmf.rows(), n = pmf.cols();
  if (x_star.rows() != m || y_star.rows() != n || x_star.cols() != d || y_star.cols() != d)
    throw ArgumentError("assumption_constants: side matrices must be m x d and n x d");
  if (!(nuclear_budget >= 0.0)) throw ArgumentError("assumption_constants: budget must be >= 0");

  AssumptionConstants c;
  c.d = d;
  c.nuclear_budget = nuclear_budget;
  const double md = static_cast<double>(m), nd = static_cast<double>(n), dd = static_cast<double>(d);
  const Vector p = pmf.rowwise().sum();
  const Vector q = pmf.colwise().sum().transpose();
  c.kappa1 = std::max(p.maxCoeff() * md, q.maxCoeff() * nd);
  c.p_star = std::max(p.maxCoeff(), q.maxCoeff());
  c.gamma = pmf.maxCoeff() * md * nd;

  const SpectralDiagnostics sd = spectral_diagnostics(pmf, d);
  c.spectral_norm = sd.spectral_norm;
  c.eigengap = sd.eigengap;
  c.kappa_star = sd.condition;

  c.x_star = x_star.rowwise().norm().maxCoeff();
  c.y_star = y_star.rowwise().norm().maxCoeff();
  c.script_p_star = std::max(std::sqrt(nd / md) * c.x_star, std::sqrt(md / nd) * c.y_star);

  const double sx = spectral_norm(x_star), sy = spectral_norm(y_star);
  const double kx = c.x_star > 0.0 ? sx * sx * dd / (c.x_star * c.x_star * md) : 0.0;
  const double ky = c.y_star > 0.0 ? sy * sy * dd / (c.y_star * c.y_star * nd) : 0.0;
  c.kappa2 = std::max(kx, ky);
  c.r = nuclear_budget * nuclear_budget / (dd * dd);
  return c;
}

/// Loss constants entering the bound.
struct LossConstants {
  double lipschitz = 0.0;
  double bound = 0.0;

  static LossConstants from(const LossSpec& loss) {
    const auto l = loss.lipschitz();
    const auto b = loss.bound();
    if (!l || !b)
      throw ArgumentError(std::string("loss '") + to_string(loss.kind) +
                          "' is unbounded; the bound needs a bounded Lipschitz loss (use clipped_squared with a clip range)");
    return {*l, *b};
  }
};

enum class BoundForm {
  main,      // 2 b log(6/d)/sqrt(N) + 16 l P^2 ... (main-text constants)
  appendix,  // 2.5 b log(6/d)/sqrt(N) + 8 l P^2 ... (1 + 1/sqrt(N))
};

struct BoundReport {
  double term_hoeffding = 0.0;
  double term_labeled = 0.0;
  double term_unlabeled = 0.0;
  double term_cross = 0.0;
  double total = 0.0;
  double m_condition_threshold = 0.0;
  bool m_condition_met = false;
  double delta = 0.05;
  long m_unlabeled = 0;
  long n_labeled = 0;
  BoundForm form = BoundForm::main;
};

inline BoundReport theorem_bound(const AssumptionConstants& c, int m, int n, long m_unlabeled, long n_labeled,
                                 double delta, const LossConstants& loss, BoundForm form = BoundForm::main) {
  if (m_unlabeled < 1 || n_labeled < 1) throw ArgumentError("theorem_bound: M and N must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("theorem_bound: delta must lie in (0, 1)");
  if (!(loss.lipschitz >= 0.0 && loss.bound >= 0.0) || !std::isfinite(loss.lipschitz) || !std::isfinite(loss.bound))
    throw ArgumentError("theorem_bound: loss constants must be finite and nonnegative");

  const double big_m = static_cast<double>(m_unlabeled);
  const double big_n = static_cast<double>(n_labeled);
  const double mn = static_cast<double>(m) + static_cast<double>(n);
  const double d = static_cast<double>(c.d);
  const double ps = c.script_p_star;
  const double l = loss.lipschitz;
  const double log_mn = std::log(12.0 * mn / delta);

  BoundReport rep;
  rep.delta = delta;
  rep.form = form;
  rep.m_unlabeled = m_unlabeled;
  rep.n_labeled = n_labeled;
  const double labeled_core =
      ps * ps * l * std::sqrt(c.kappa1 * c.kappa2) * std::log(2.0 * d * std::numbers::e) * std::sqrt(d * c.r / big_n);
  if (form == BoundForm::main) {
    rep.term_hoeffding = 2.0 * loss.bound * std::log(6.0 / delta) / std::sqrt(big_n);
    rep.term_labeled = 16.0 * labeled_core;
  } else {
    rep.term_hoeffding = 2.5 * loss.bound * std::log(6.0 / delta) / std::sqrt(big_n);
    rep.term_labeled = 8.0 * labeled_core * (1.0 + std::sqrt(1.0 / big_n));
  }
  rep.term_unlabeled = 75.0 * ps * l * c.kappa_star * c.kappa1 * log_mn * std::sqrt(mn * c.r / big_m);
  rep.term_cross = 25.0 * ps * l * c.kappa_star * log_mn * std::sqrt(mn * c.gamma * c.r / (big_m * big_n));
  rep.total = rep.term_hoeffding + rep.term_labeled + rep.term_unlabeled + rep.term_cross;
  rep.m_condition_threshold =
      470.0 * std::log(4.0 * mn / delta) * c.kappa_star * c.kappa_star * ps * ps * mn;
  rep.m_condition_met = big_m >= rep.m_condition_threshold;
  return rep;
}

inline BoundReport theorem_bound(const AssumptionConstants& c, int m, int n, long m_unlabeled, long n_labeled,
                                 double delta, const LossSpec& loss, BoundForm form = BoundForm::main) {
  return theorem_bound(c, m, n, m_unlabeled, n_labeled, delta, LossConstants::from(loss), form);
}

struct ComplexityTerms {
  double sigma1_star = 0.0;
  double sigma2_star = 0.0;
};

/// sigma1* = |X^T diag(kl) X|^{1/2}, kl_i = sum_j P_ij |Y_j|^2;
/// sigma2* = |Y^T diag(kr) Y|^{1/2}, kr_j = sum_i P_ij |X_i|^2.
inline ComplexityTerms imc_complexity_terms(const Matrix& pmf, const Matrix& x, const Matrix& y) {
  if (x.rows() != pmf.rows() || y.rows() != pmf.cols() || x.cols() != y.cols())
    throw ArgumentError("imc_complexity_terms: shape mismatch");
  const Vector kl = pmf * y.rowwise().squaredNorm();
  const Vector kr = pmf.transpose() * x.rowwise().squaredNorm();
  const Matrix left = x.transpose() * kl.asDiagonal() * x;
  const Matrix right = y.transpose() * kr.asDiagonal() * y;
  return {std::sqrt(spectral_norm(left)), std::sqrt(spectral_norm(right))};
}

}  // namespace damc
