#pragma once

// Inductive matrix completion on fixed side information: fit the d x d core
// of the predictor X * core * Y^T from labeled entries, either under a
// nuclear-norm budget (projected gradient) or in the factored
// Lagrangian form core = A * B^T with a Frobenius penalty.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "damc/error.hpp"
#include "damc/linalg.hpp"
#include "damc/rng.hpp"
#include "damc/subspace.hpp"
#include "damc/synthgen.hpp"

namespace damc {

enum class LossKind { squared, absolute, clipped_squared };

struct ClipRange {
  double lo = 0.0;
  double hi = 0.0;

  double apply(double v) const { return std::clamp(v, lo, hi); }
};

struct LossSpec {
  LossKind kind = LossKind::squared;
  std::optional<ClipRange> clip_range;

  static LossSpec squared() { return {LossKind::squared, std::nullopt}; }
  static LossSpec absolute() { return {LossKind::absolute, std::nullopt}; }
  static LossSpec clipped_squared(double lo, double hi) {
    if (!(hi > lo)) throw ArgumentError("clip range needs hi > lo");
    return {LossKind::clipped_squared, ClipRange{lo, hi}};
  }
  /// Clipped squared loss over the observed label range.
  static LossSpec clipped_squared(std::span<const LabeledEntry> labeled) {
    if (labeled.empty()) throw ArgumentError("cannot infer a clip range from no labels");
    auto [lo, hi] = std::minmax_element(labeled.begin(), labeled.end(),
                                        [](const auto& a, const auto& b) { return a.value < b.value; });
    return clipped_squared(lo->value, hi->value > lo->value ? hi->value : lo->value + 1.0);
  }

  /// Lipschitz constant in the prediction; nullopt means unbounded.
  std::optional<double> lipschitz() const {
    switch (kind) {
      case LossKind::absolute: return 1.0;
      case LossKind::clipped_squared: return 2.0 * (clip_range->hi - clip_range->lo);
      default: return std::nullopt;
    }
  }

  /// Uniform bound on the loss value; nullopt means unbounded.
  std::optional<double> bound() const {
    if (kind == LossKind::clipped_squared) {
      const double w = clip_range->hi - clip_range->lo;
      return w * w;
    }
    return std::nullopt;
  }

  double value(double pred, double label) const {
    switch (kind) {
      case LossKind::squared: return (pred - label) * (pred - label);
      case LossKind::absolute: return std::abs(pred - label);
      case LossKind::clipped_squared: {
        const double r = clip_range->apply(pred) - clip_range->apply(label);
        return r * r;
      }
    }
    return 0.0;
  }

  /// d value / d pred (a subgradient where the loss is not differentiable).
  double derivative(double pred, double label) const {
    switch (kind) {
      case LossKind::squared: return 2.0 * (pred - label);
      case LossKind::absolute: return pred > label ? 1.0 : (pred < label ? -1.0 : 0.0);
      case LossKind::clipped_squared: {
        if (pred <= clip_range->lo || pred >= clip_range->hi) return 0.0;
        return 2.0 * (pred - clip_range->apply(label));
      }
    }
    return 0.0;
  }
};

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::squared: return "squared";
    case LossKind::absolute: return "absolute";
    case LossKind::clipped_squared: return "clipped_squared";
  }
  return "?";
}

struct SolverConfig {
  int max_iters = 2000;
  /// Fixed step; nullopt selects backtracking line search.
  std::optional<double> step_size;
  double tolerance = 1e-8;
  /// Std-dev of the factored initialization; nullopt means 0.1 / sqrt(d).
  std::optional<double> init_scale;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (!(tolerance > 0.0)) throw ConfigError("tolerance must be > 0");
    if (step_size && !(*step_size > 0.0)) throw ConfigError("step_size must be > 0");
  }
};

struct FitResult {
  Matrix core;  // d x d
  Matrix a;     // d x k (factored fits only)
  Matrix b;     // d x k (factored fits only)
  std::vector<double> objective_trace;
  double train_risk = 0.0;
  double nuclear_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Euclidean projection of a nonnegative vector onto {w >= 0 : sum(w) <= budget}.
inline Vector l1_simplex_project(const Vector& values, double budget) {
  if (!(budget >= 0.0)) throw ArgumentError("l1_simplex_project: budget must be >= 0");
  if ((values.array() < 0.0).any()) throw ArgumentError("l1_simplex_project: values must be nonnegative");
  if (values.sum() <= budget) return values;
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    cumsum += sorted[j];
    const double t = (cumsum - budget) / static_cast<double>(j + 1);
    if (j == 0 || sorted[j] - t > 0.0) theta = t;
  }
  return (values.array() - theta).cwiseMax(0.0).matrix();
}

inline Matrix project_nuclear_ball(const Matrix& core, double budget) {
  if (!(budget >= 0.0)) throw ArgumentError("project_nuclear_ball: budget must be >= 0");
  Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  if (s.sum() <= budget) return core;
  const Vector w = l1_simplex_project(s, budget);
  const Eigen::Index k = s.size();
  return svd.matrixU().leftCols(k) * w.asDiagonal() * svd.matrixV().leftCols(k).transpose();
}

/// Empirical risk of X * core * Y^T over a fixed labeled sample, with gradients.
class ImcObjective {
 public:
  ImcObjective(const SideInfo& side, std::span<const LabeledEntry> labeled, LossSpec loss)
      : side_(side), loss_(loss) {
    if (labeled.empty()) throw ArgumentError("no labeled samples");
    if (side.x.cols() != side.y.cols()) throw ArgumentError("side information dimension mismatch");
    rows_.reserve(labeled.size());
    cols_.reserve(labeled.size());
    labels_.reserve(labeled.size());
    for (const auto& l : labeled) {
      if (l.entry.row < 0 || l.entry.row >= side.m() || l.entry.col < 0 || l.entry.col >= side.n())
        throw ArgumentError("labeled entry out of range");
      rows_.push_back(l.entry.row);
      cols_.push_back(l.entry.col);
      labels_.push_back(l.value);
    }
  }

  int d() const { return side_.d(); }
  std::size_t size() const { return labels_.size(); }
  const LossSpec& loss() const { return loss_; }

  Vector predictions(const Matrix& core) const {
    const Matrix xm = side_.x * core;
    Vector p(static_cast<Eigen::Index>(size()));
    for (std::size_t o = 0; o < size(); ++o)
      p(static_cast<Eigen::Index>(o)) = xm.row(rows_[o]).dot(side_.y.row(cols_[o]));
    return p;
  }

  /// Mean loss; fills the d x d gradient when grad is non-null.
  double risk(const Matrix& core, Matrix* grad = nullptr) const {
    const Matrix xm = side_.x * core;
    const double inv_n = 1.0 / static_cast<double>(size());
    double total = 0.0;
    Matrix scatter;
    if (grad) scatter = Matrix::Zero(side_.x.rows(), side_.d());
    for (std::size_t o = 0; o < size(); ++o) {
      const double p = xm.row(rows_[o]).dot(side_.y.row(cols_[o]));
      total += loss_.value(p, labels_[o]);
      if (grad) scatter.row(rows_[o]) += (inv_n * loss_.derivative(p, labels_[o])) * side_.y.row(cols_[o]);
    }
    if (grad) *grad = side_.x.transpose() * scatter;
    return total * inv_n;
  }

  /// Risk of A * B^T plus lambda * (|A|_F^2 + |B|_F^2), with gradients.
  double factored(const Matrix& a, const Matrix& b, double lambda, Matrix* grad_a = nullptr,
                  Matrix* grad_b = nullptr) const {
    Matrix g;
    const double r = risk(a * b.transpose(), (grad_a || grad_b) ? &g : nullptr);
    if (grad_a) *grad_a = g * b + 2.0 * lambda * a;
    if (grad_b) *grad_b = g.transpose() * a + 2.0 * lambda * b;
    return r + lambda * (a.squaredNorm() + b.squaredNorm());
  }

 private:
  const SideInfo& side_;
  LossSpec loss_;
  std::vector<int> rows_;
  std::vector<int> cols_;
  std::vector<double> labels_;
};

namespace detail {

inline void check_objective(double f, int iter) {
  if (!std::isfinite(f)) throw NumericalError("non-finite objective at iteration " + std::to_string(iter));
}

inline bool small_change(double before, double after, double tol) {
  return std::abs(before - after) <= tol * std::max(std::abs(before), std::numeric_limits<double>::min());
}

constexpr double kArmijo = 1e-4;
constexpr double kMinStep = 1e-30;

}  // namespace detail

/// Projected (sub)gradient descent on the empirical risk over the nuclear ball
/// of radius `budget`, starting from the zero core.
inline FitResult fit_projected(const SideInfo& side, std::span<const LabeledEntry> labeled, double budget,
                               const LossSpec& loss, const SolverConfig& cfg = {}) {
  cfg.validate();
  if (!(budget > 0.0)) throw ArgumentError("fit_projected: budget must be > 0");
  const ImcObjective obj(side, labeled, loss);
  const int d = obj.d();

  FitResult res;
  Matrix core = Matrix::Zero(d, d);
  Matrix grad;
  double f = obj.risk(core, &grad);
  detail::check_objective(f, 0);
  res.objective_trace.push_back(f);
  double step = cfg.step_size.value_or(1.0);

  for (int it = 1; it <= cfg.max_iters; ++it) {
    res.iterations = it;
    Matrix next;
    double f_next = 0.0;
    if (cfg.step_size) {
      next = project_nuclear_ball(core - step * grad, budget);
      f_next = obj.risk(next);
    } else {
      bool accepted = false;
      for (double t = step; t >= detail::kMinStep; t *= 0.5) {
        next = project_nuclear_ball(core - t * grad, budget);
        const double descent = (grad.array() * (next - core).array()).sum();
        if (descent >= 0.0) break;  // stationary on the ball
        f_next = obj.risk(next);
        if (std::isfinite(f_next) && f_next <= f + detail::kArmijo * descent) {
          accepted = true;
          step = 2.0 * t;
          break;
        }
      }
      if (!accepted) {
        res.converged = true;
        break;
      }
    }
    detail::check_objective(f_next, it);
    core = std::move(next);
    const double f_prev = f;
    f = obj.risk(core, &grad);
    res.objective_trace.push_back(f);
    if (detail::small_change(f_prev, f, cfg.tolerance)) {
      res.converged = true;
      break;
    }
  }
  res.core = core;
  res.train_risk = f;
  res.nuclear_norm = nuclear_norm(core);
  return res;
}

/// Gradient descent on the factored Lagrangian with core = A * B^T, A, B of shape d x k.
inline FitResult fit_factored(const SideInfo& side, std::span<const LabeledEntry> labeled, double lambda,
                              int inner_rank, const LossSpec& loss, const SolverConfig& cfg = {}) {
  cfg.validate();
  if (!(lambda >= 0.0)) throw ArgumentError("fit_factored: lambda must be >= 0");
  const ImcObjective obj(side, labeled, loss);
  const int d = obj.d();
  if (inner_rank < 1 || inner_rank > d) throw ArgumentError("fit_factored: inner rank must lie in [1, d]");

  const double scale = cfg.init_scale.value_or(0.1 / std::sqrt(static_cast<double>(d)));
  Engine rng = make_engine(cfg.seed, "factored_init");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(d, inner_rank), b(d, inner_rank);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < inner_rank; ++j) a(i, j) = scale * normal(rng);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < inner_rank; ++j) b(i, j) = scale * normal(rng);

  FitResult res;
  Matrix ga, gb;
  double f = obj.factored(a, b, lambda, &ga, &gb);
  detail::check_objective(f, 0);
  res.objective_trace.push_back(f);
  double step = cfg.step_size.value_or(1.0);

  for (int it = 1; it <= cfg.max_iters; ++it) {
    res.iterations = it;
    const double gnorm2 = ga.squaredNorm() + gb.squaredNorm();
    if (gnorm2 == 0.0) {
      res.converged = true;
      break;
    }
    Matrix a_next, b_next;
    double f_next = 0.0;
    if (cfg.step_size) {
      a_next = a - step * ga;
      b_next = b - step * gb;
      f_next = obj.factored(a_next, b_next, lambda);
    } else {
      bool accepted = false;
      for (double t = step; t >= detail::kMinStep; t *= 0.5) {
        a_next = a - t * ga;
        b_next = b - t * gb;
        f_next = obj.factored(a_next, b_next, lambda);
        if (std::isfinite(f_next) && f_next <= f - detail::kArmijo * t * gnorm2) {
          accepted = true;
          step = 2.0 * t;
          break;
        }
      }
      if (!accepted) {
        res.converged = true;
        break;
      }
    }
    detail::check_objective(f_next, it);
    a = std::move(a_next);
    b = std::move(b_next);
    const double f_prev = f;
    f = obj.factored(a, b, lambda, &ga, &gb);
    res.objective_trace.push_back(f);
    if (detail::small_change(f_prev, f, cfg.tolerance)) {
      res.converged = true;
      break;
    }
  }
  res.a = a;
  res.b = b;
  res.core = a * b.transpose();
  res.train_risk = obj.risk(res.core);
  res.nuclear_norm = nuclear_norm(res.core);
  return res;
}

/// (X * core * Y^T) at each entry, optionally clipped.
inline std::vector<double> predict(const SideInfo& side, const Matrix& core, std::span<const Entry> entries,
                                   std::optional<ClipRange> clip = std::nullopt) {
  if (core.rows() != side.x.cols() || core.cols() != side.y.cols()) throw ArgumentError("predict: core shape mismatch");
  const Matrix xm = side.x * core;
  std::vector<double> out;
  out.reserve(entries.size());
  for (const Entry& e : entries) {
    if (e.row < 0 || e.row >= side.m() || e.col < 0 || e.col >= side.n())
      throw ArgumentError("predict: entry (" + std::to_string(e.row) + "," + std::to_string(e.col) + ") out of range");
    double v = xm.row(e.row).dot(side.y.row(e.col));
    if (clip) v = clip->apply(v);
    out.push_back(v);
  }
  return out;
}

inline double empirical_risk(std::span<const double> predictions, std::span<const double> labels,
                             const LossSpec& loss) {
  if (predictions.size() != labels.size()) throw ArgumentError("empirical_risk: length mismatch");
  if (predictions.empty()) throw ArgumentError("empirical_risk: empty input");
  double total = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) total += loss.value(predictions[k], labels[k]);
  return total / static_cast<double>(predictions.size());
}

inline std::vector<double> label_values(std::span<const LabeledEntry> labeled) {
  std::vector<double> v;
  v.reserve(labeled.size());
  for (const auto& l : labeled) v.push_back(l.value);
  return v;
}

inline std::vector<Entry> label_entries(std::span<const LabeledEntry> labeled) {
  std::vector<Entry> v;
  v.reserve(labeled.size());
  for (const auto& l : labeled) v.push_back(l.entry);
  return v;
}

}  // namespace damc
