#pragma once

// Realizable synthetic worlds: block-structured sampling distributions that
// share their row/column spaces with a low-rank ground truth, plus i.i.d.
// labeled and unlabeled entry draws.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "damc/error.hpp"
#include "damc/linalg.hpp"
#include "damc/rng.hpp"

namespace damc {

struct Entry {
  int row = 0;
  int col = 0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

struct LabeledEntry {
  Entry entry;
  double value = 0.0;
};

struct ObservationSet {
  int m = 0;
  int n = 0;
  std::vector<Entry> unlabeled;
  std::vector<LabeledEntry> labeled;

  /// Throws ArgumentError if an index is out of range or a label is non-finite.
  void validate() const {
    auto check = [this](const Entry& e) {
      if (e.row < 0 || e.row >= m || e.col < 0 || e.col >= n)
        throw ArgumentError("entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                            ") outside " + std::to_string(m) + "x" + std::to_string(n));
    };
    for (const auto& e : unlabeled) check(e);
    for (const auto& l : labeled) {
      check(l.entry);
      if (!std::isfinite(l.value)) throw ArgumentError("non-finite label");
    }
  }
};

struct SynthConfig {
  int m = 200;
  int n = 200;
  int d = 4;
  /// Row and column group sizes; empty means d groups of (nearly) equal size.
  std::vector<int> row_group_sizes;
  std::vector<int> col_group_sizes;
  double core_frobenius_norm = 4.0;
  double noise_sd = 0.05;
  std::uint64_t seed = 0;
  /// Fixed d x d block weights; unset means uniform random draws.
  std::optional<Matrix> p0;

  static std::vector<int> even_partition(int total, int groups) {
    std::vector<int> sizes(groups, total / groups);
    for (int g = 0; g < total % groups; ++g) ++sizes[g];
    return sizes;
  }

  std::vector<int> row_sizes() const {
    return row_group_sizes.empty() ? even_partition(m, d) : row_group_sizes;
  }
  std::vector<int> col_sizes() const {
    return col_group_sizes.empty() ? even_partition(n, d) : col_group_sizes;
  }

  void validate() const {
    if (d < 1) throw ConfigError("d must be >= 1");
    if (m < d || n < d) throw ConfigError("need m >= d and n >= d so every group is nonempty");
    if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be >= 0");
    if (!(core_frobenius_norm > 0.0)) throw ConfigError("core_frobenius_norm must be > 0");
    auto check = [this](const std::vector<int>& sizes, int total, const char* what) {
      if (static_cast<int>(sizes.size()) != d)
        throw ConfigError(std::string(what) + " group count must equal d");
      if (std::any_of(sizes.begin(), sizes.end(), [](int s) { return s < 1; }))
        throw ConfigError(std::string(what) + " groups must be nonempty");
      if (std::accumulate(sizes.begin(), sizes.end(), 0) != total)
        throw ConfigError(std::string(what) + " group sizes must sum to the dimension");
    };
    check(row_sizes(), m, "row");
    check(col_sizes(), n, "column");
    if (p0) {
      if (p0->rows() != d || p0->cols() != d) throw ConfigError("p0 must be d x d");
      if ((p0->array() < 0.0).any() || !p0->allFinite()) throw ConfigError("p0 entries must be finite and >= 0");
      if (!(p0->sum() > 0.0)) throw ConfigError("p0 must have positive mass");
    }
  }
};

struct SynthWorld {
  Matrix x_star;        // m x d group indicators
  Matrix y_star;        // n x d group indicators
  Matrix core_star;     // d x d
  Matrix pmf;           // m x n, nonnegative, sums to one
  Matrix ground_truth;  // x_star * core_star * y_star^T
  std::vector<int> row_group;
  std::vector<int> col_group;

  int m() const { return static_cast<int>(pmf.rows()); }
  int n() const { return static_cast<int>(pmf.cols()); }
  int d() const { return static_cast<int>(core_star.rows()); }
};

namespace detail {

inline std::vector<int> random_partition(const std::vector<int>& sizes, Engine& rng) {
  const int total = std::accumulate(sizes.begin(), sizes.end(), 0);
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> group(total);
  int pos = 0;
  for (int g = 0; g < static_cast<int>(sizes.size()); ++g)
    for (int k = 0; k < sizes[g]; ++k) group[order[pos++]] = g;
  return group;
}

inline Matrix indicator_matrix(const std::vector<int>& group, int d) {
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(group.size()), d);
  for (std::size_t i = 0; i < group.size(); ++i) x(static_cast<Eigen::Index>(i), group[i]) = 1.0;
  return x;
}

}  // namespace detail

inline SynthWorld make_world(const SynthConfig& cfg) {
  cfg.validate();
  const int d = cfg.d;
  SynthWorld w;

  Engine row_rng = make_engine(cfg.seed, "row_partition");
  Engine col_rng = make_engine(cfg.seed, "col_partition");
  w.row_group = detail::random_partition(cfg.row_sizes(), row_rng);
  w.col_group = detail::random_partition(cfg.col_sizes(), col_rng);
  w.x_star = detail::indicator_matrix(w.row_group, d);
  w.y_star = detail::indicator_matrix(w.col_group, d);

  Engine core_rng = make_engine(cfg.seed, "core");
  std::normal_distribution<double> normal(0.0, 1.0);
  w.core_star.resize(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) w.core_star(a, b) = normal(core_rng);
  const double fro = w.core_star.norm();
  if (!(fro > 0.0)) throw NumericalError("degenerate core draw");
  w.core_star *= cfg.core_frobenius_norm / fro;

  Engine p0_rng = make_engine(cfg.seed, "p0");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw_p0 = [&] {
    Matrix p0(d, d);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) p0(a, b) = unif(p0_rng);
    return p0;
  };
  Matrix p0 = cfg.p0 ? *cfg.p0 : draw_p0();
  Matrix pmf = w.x_star * p0 * w.y_star.transpose();
  if (pmf.sum() < 1e-12) {
    p0 = draw_p0();
    pmf = w.x_star * p0 * w.y_star.transpose();
    if (pmf.sum() < 1e-12) throw NumericalError("sampling matrix draw is identically zero");
  }
  w.pmf = pmf / pmf.cwiseAbs().sum();
  w.ground_truth = w.x_star * w.core_star * w.y_star.transpose();
  return w;
}

/// Inverse-CDF sampler over the cells of a PMF, flattened row-major.
class EntrySampler {
 public:
  explicit EntrySampler(const Matrix& pmf) : m_(static_cast<int>(pmf.rows())), n_(static_cast<int>(pmf.cols())) {
    if (pmf.size() == 0) throw ArgumentError("empty sampling distribution");
    cumulative_.resize(static_cast<std::size_t>(pmf.size()));
    double acc = 0.0;
    std::size_t k = 0;
    for (int i = 0; i < m_; ++i)
      for (int j = 0; j < n_; ++j) {
        const double p = pmf(i, j);
        if (!(p >= 0.0)) throw ArgumentError("sampling distribution has a negative or NaN entry");
        acc += p;
        cumulative_[k++] = acc;
      }
    if (!(acc > 0.0)) throw ArgumentError("sampling distribution has zero mass");
  }

  Entry operator()(Engine& rng) const {
    std::uniform_real_distribution<double> unif(0.0, cumulative_.back());
    const double u = unif(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    // Never land on a zero-probability cell at the top boundary.
    auto k = static_cast<std::size_t>(it - cumulative_.begin());
    while (k > 0 && cumulative_[k] == cumulative_[k - 1]) --k;
    return Entry{static_cast<int>(k / static_cast<std::size_t>(n_)), static_cast<int>(k % static_cast<std::size_t>(n_))};
  }

  int m() const { return m_; }
  int n() const { return n_; }

 private:
  int m_;
  int n_;
  std::vector<double> cumulative_;
};

inline ObservationSet draw_unlabeled(const SynthWorld& world, long count, std::uint64_t seed) {
  if (count < 0) throw ArgumentError("count must be >= 0");
  EntrySampler sampler(world.pmf);
  Engine rng = make_engine(seed, "unlabeled_entries");
  ObservationSet obs;
  obs.m = world.m();
  obs.n = world.n();
  obs.unlabeled.reserve(static_cast<std::size_t>(count));
  for (long k = 0; k < count; ++k) obs.unlabeled.push_back(sampler(rng));
  return obs;
}

inline ObservationSet draw_labeled(const SynthWorld& world, long count, double noise_sd, std::uint64_t seed) {
  if (count < 0) throw ArgumentError("count must be >= 0");
  if (!(noise_sd >= 0.0)) throw ArgumentError("noise_sd must be >= 0");
  EntrySampler sampler(world.pmf);
  Engine entry_rng = make_engine(seed, "labeled_entries");
  Engine noise_rng = make_engine(seed, "label_noise");
  std::normal_distribution<double> noise(0.0, 1.0);
  ObservationSet obs;
  obs.m = world.m();
  obs.n = world.n();
  obs.labeled.reserve(static_cast<std::size_t>(count));
  for (long k = 0; k < count; ++k) {
    const Entry e = sampler(entry_rng);
    const double z = noise(noise_rng);
    obs.labeled.push_back({e, world.ground_truth(e.row, e.col) + noise_sd * z});
  }
  return obs;
}

}  // namespace damc
