#pragma once

// Explicit-feedback-only reference methods: SoftImpute (iterated soft
// thresholding of singular values) and user-based k-nearest neighbours.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "damc/error.hpp"
#include "damc/imc.hpp"
#include "damc/linalg.hpp"
#include "damc/log.hpp"
#include "damc/rng.hpp"
#include "damc/subspace.hpp"
#include "damc/synthgen.hpp"

namespace damc {

/// Soft-threshold every singular value by lambda.
inline Matrix svt(const Matrix& a, double lambda) {
  if (!(lambda >= 0.0)) throw ArgumentError("svt: lambda must be >= 0");
  if (a.size() == 0) return a;
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector s = (svd.singularValues().array() - lambda).cwiseMax(0.0).matrix();
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

struct SoftImputeConfig {
  double lambda = 1.0;
  int max_rank = 100;
  int max_iters = 100;
  double tolerance = 1e-5;
  /// Power iterations for the randomized SVD used when max_rank < min(m, n).
  int power_iterations = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("softimpute lambda must be >= 0");
    if (max_rank < 1) throw ConfigError("softimpute max_rank must be >= 1");
    if (max_iters < 1) throw ConfigError("softimpute max_iters must be >= 1");
    if (!(tolerance > 0.0)) throw ConfigError("softimpute tolerance must be > 0");
  }
};

struct SoftImputeResult {
  Matrix completion;
  std::vector<double> objective_trace;  // 0.5 |P_obs(Z - X)|_F^2 + lambda |Z|_*
  int iterations = 0;
  int rank = 0;
  bool converged = false;
};

/// Observed cells with duplicate labels averaged.
struct ObservedCells {
  std::vector<Entry> entries;
  std::vector<double> values;

  static ObservedCells from(std::span<const LabeledEntry> labeled, int m, int n) {
    std::map<std::pair<int, int>, std::pair<double, int>> acc;
    for (const auto& l : labeled) {
      if (l.entry.row < 0 || l.entry.row >= m || l.entry.col < 0 || l.entry.col >= n)
        throw ArgumentError("labeled entry out of range");
      auto& slot = acc[{l.entry.row, l.entry.col}];
      slot.first += l.value;
      slot.second += 1;
    }
    ObservedCells out;
    for (const auto& [key, sum] : acc) {
      out.entries.push_back({key.first, key.second});
      out.values.push_back(sum.first / sum.second);
    }
    return out;
  }
};

inline SoftImputeResult softimpute_fit(std::span<const LabeledEntry> labeled, int m, int n,
                                       const SoftImputeConfig& cfg, const Matrix* warm_start = nullptr) {
  cfg.validate();
  if (labeled.empty()) throw ArgumentError("softimpute_fit: no labeled samples");
  const ObservedCells obs = ObservedCells::from(labeled, m, n);
  const int small = std::min(m, n);
  const bool exact = cfg.max_rank >= small || small <= 64;
  const int rank_cap = std::min(cfg.max_rank, small);

  SoftImputeResult res;
  Matrix z = (warm_start && warm_start->rows() == m && warm_start->cols() == n) ? *warm_start : Matrix::Zero(m, n);
  Matrix basis;  // previous right singular vectors, reused as the range-finder start
  for (int it = 1; it <= cfg.max_iters; ++it) {
    res.iterations = it;
    Matrix w = z;
    for (std::size_t k = 0; k < obs.entries.size(); ++k) w(obs.entries[k].row, obs.entries[k].col) = obs.values[k];

    Matrix u, v;
    Vector s;
    if (exact) {
      Eigen::BDCSVD<Matrix> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
      if (svd.info() != Eigen::Success) throw NumericalError("softimpute: SVD failed");
      u = svd.matrixU().leftCols(rank_cap);
      s = svd.singularValues().head(rank_cap);
      v = svd.matrixV().leftCols(rank_cap);
    } else {
      SvdOptions opt;
      opt.power_iterations = cfg.power_iterations;
      opt.seed = derive_seed(cfg.seed, "softimpute_svd", static_cast<std::uint64_t>(it));
      opt.warm_start = basis.size() ? &basis : nullptr;
      SubspaceFactors f = randomized_svd(w, rank_cap, opt);
      u = std::move(f.u);
      s = std::move(f.sigma);
      v = std::move(f.v);
      basis = v;
    }
    s = (s.array() - cfg.lambda).cwiseMax(0.0).matrix();
    res.rank = static_cast<int>((s.array() > 0.0).count());
    Matrix z_next = u * s.asDiagonal() * v.transpose();
    if (!z_next.allFinite()) throw NumericalError("softimpute: non-finite iterate");

    double fit = 0.0;
    for (std::size_t k = 0; k < obs.entries.size(); ++k) {
      const double r = z_next(obs.entries[k].row, obs.entries[k].col) - obs.values[k];
      fit += r * r;
    }
    res.objective_trace.push_back(0.5 * fit + cfg.lambda * s.sum());

    const double change = (z_next - z).squaredNorm() / std::max(z.squaredNorm(), 1e-300);
    z = std::move(z_next);
    if (change < cfg.tolerance) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged) log::warn("softimpute: no convergence after " + std::to_string(cfg.max_iters) + " iterations");
  res.completion = std::move(z);
  return res;
}

struct SoftImputeTuning {
  double lambda = 0.0;
  double scale = 0.0;  // |P_obs(X)| / sqrt(N)
  std::vector<std::pair<double, double>> validation_rmse;  // (lambda, rmse)
};

/// Picks lambda from multipliers * |P_obs(X)| / sqrt(N) by RMSE on a held-out
/// fraction of the labeled entries, walking the path from large to small lambda
/// with warm starts.
inline SoftImputeTuning tune_softimpute(std::span<const LabeledEntry> labeled, int m, int n,
                                        const SoftImputeConfig& base, std::vector<double> multipliers,
                                        double validation_fraction, std::uint64_t seed,
                                        std::optional<ClipRange> clip = std::nullopt) {
  if (labeled.size() < 2) throw ArgumentError("tune_softimpute: need at least two labeled samples");
  if (multipliers.empty()) throw ArgumentError("tune_softimpute: empty lambda grid");
  const ObservedCells obs = ObservedCells::from(labeled, m, n);
  Matrix observed = Matrix::Zero(m, n);
  for (std::size_t k = 0; k < obs.entries.size(); ++k) observed(obs.entries[k].row, obs.entries[k].col) = obs.values[k];

  SoftImputeTuning out;
  out.scale = spectral_norm(observed) / std::sqrt(static_cast<double>(labeled.size()));

  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), 0);
  Engine rng = make_engine(seed, "softimpute_validation");
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(validation_fraction * labeled.size()));
  std::vector<LabeledEntry> train, valid;
  for (std::size_t k = 0; k < order.size(); ++k) (k < n_val ? valid : train).push_back(labeled[order[k]]);
  if (train.empty()) throw ArgumentError("tune_softimpute: validation split left no training samples");

  std::sort(multipliers.begin(), multipliers.end(), std::greater<>());
  Matrix warm;
  double best = std::numeric_limits<double>::infinity();
  for (double mult : multipliers) {
    SoftImputeConfig cfg = base;
    cfg.lambda = mult * out.scale;
    SoftImputeResult fit = softimpute_fit(train, m, n, cfg, warm.size() ? &warm : nullptr);
    double sse = 0.0;
    for (const auto& l : valid) {
      double p = fit.completion(l.entry.row, l.entry.col);
      if (clip) p = clip->apply(p);
      sse += (p - l.value) * (p - l.value);
    }
    const double rmse = std::sqrt(sse / static_cast<double>(valid.size()));
    out.validation_rmse.emplace_back(cfg.lambda, rmse);
    if (rmse < best) {
      best = rmse;
      out.lambda = cfg.lambda;
    }
    warm = std::move(fit.completion);
  }
  return out;
}

enum class KnnFallback { user_mean, global_mean };

struct KnnConfig {
  int k = 40;
  int min_overlap = 3;
  KnnFallback fallback = KnnFallback::user_mean;

  void validate() const {
    if (k < 1) throw ConfigError("knn k must be >= 1");
    if (min_overlap < 1) throw ConfigError("knn min_overlap must be >= 1");
  }
};

/// User-based kNN with mean-centered cosine similarity over co-rated items.
class UserKnn {
 public:
  UserKnn(std::span<const LabeledEntry> labeled, int m, int n, KnnConfig cfg) : cfg_(cfg), m_(m), n_(n) {
    cfg_.validate();
    if (labeled.empty()) throw ArgumentError("knn: no labeled samples");
    const ObservedCells obs = ObservedCells::from(labeled, m, n);
    Matrix ratings = Matrix::Zero(m, n);
    Matrix mask = Matrix::Zero(m, n);
    for (std::size_t k = 0; k < obs.entries.size(); ++k) {
      ratings(obs.entries[k].row, obs.entries[k].col) = obs.values[k];
      mask(obs.entries[k].row, obs.entries[k].col) = 1.0;
    }
    const Vector counts = mask.rowwise().sum();
    user_mean_ = Vector::Zero(m);
    has_ratings_.assign(static_cast<std::size_t>(m), false);
    for (int u = 0; u < m; ++u)
      if (counts(u) > 0) {
        user_mean_(u) = ratings.row(u).sum() / counts(u);
        has_ratings_[static_cast<std::size_t>(u)] = true;
      }
    global_mean_ = std::accumulate(obs.values.begin(), obs.values.end(), 0.0) / static_cast<double>(obs.values.size());

    Matrix centered = ratings;
    for (int u = 0; u < m; ++u) centered.row(u) = (ratings.row(u).array() - user_mean_(u)).matrix().cwiseProduct(mask.row(u));
    const Matrix sq = centered.cwiseProduct(centered);
    const Matrix numer = centered * centered.transpose();
    const Matrix norm_left = sq * mask.transpose();   // (u, v): sum over co-rated of c_u^2
    overlap_ = mask * mask.transpose();
    similarity_ = Matrix::Zero(m, m);
    for (int u = 0; u < m; ++u)
      for (int v = 0; v < m; ++v) {
        if (u == v || overlap_(u, v) < cfg_.min_overlap) continue;
        const double den = std::sqrt(norm_left(u, v)) * std::sqrt(norm_left(v, u));
        if (den > 0.0) similarity_(u, v) = numer(u, v) / den;
      }

    raters_.assign(static_cast<std::size_t>(n), {});
    for (std::size_t k = 0; k < obs.entries.size(); ++k)
      raters_[static_cast<std::size_t>(obs.entries[k].col)].emplace_back(obs.entries[k].row, obs.values[k]);
  }

  double predict(const Entry& q) const {
    if (q.row < 0 || q.row >= m_ || q.col < 0 || q.col >= n_) throw ArgumentError("knn: query out of range");
    std::vector<std::pair<double, double>> cands;  // (similarity, rating)
    std::vector<int> cand_users;
    for (const auto& [v, r] : raters_[static_cast<std::size_t>(q.col)]) {
      if (v == q.row) continue;
      const double s = similarity_(q.row, v);
      if (s > 0.0) {
        cands.emplace_back(s, r);
        cand_users.push_back(v);
      }
    }
    if (cands.empty()) return fallback(q.row);
    std::vector<std::size_t> idx(cands.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (cands[a].first != cands[b].first) return cands[a].first > cands[b].first;
      return cand_users[a] < cand_users[b];
    });
    const std::size_t take = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(cfg_.k));
    double sum = 0.0;
    for (std::size_t t = 0; t < take; ++t) sum += cands[idx[t]].second;
    return sum / static_cast<double>(take);
  }

  std::vector<double> predict(std::span<const Entry> queries) const {
    std::vector<double> out;
    out.reserve(queries.size());
    for (const Entry& q : queries) out.push_back(predict(q));
    return out;
  }

  double similarity(int u, int v) const { return similarity_(u, v); }

 private:
  double fallback(int user) const {
    if (cfg_.fallback == KnnFallback::user_mean && has_ratings_[static_cast<std::size_t>(user)]) return user_mean_(user);
    return global_mean_;
  }

  KnnConfig cfg_;
  int m_;
  int n_;
  Vector user_mean_;
  std::vector<bool> has_ratings_;
  double global_mean_ = 0.0;
  Matrix overlap_;
  Matrix similarity_;
  std::vector<std::vector<std::pair<int, double>>> raters_;
};

inline std::vector<double> knn_predict(std::span<const LabeledEntry> labeled, std::span<const Entry> queries, int m,
                                       int n, const KnnConfig& cfg) {
  return UserKnn(labeled, m, n, cfg).predict(queries);
}

}  // namespace damc
