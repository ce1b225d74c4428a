#pragma once

// Experiment drivers: the synthetic (M, N) grid with its generalization-gap
// decomposition, and the masked-label protocol on MovieLens-100K style data.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "damc/baselines.hpp"
#include "damc/error.hpp"
#include "damc/imc.hpp"
#include "damc/log.hpp"
#include "damc/rng.hpp"
#include "damc/subspace.hpp"
#include "damc/synthgen.hpp"

namespace damc {

// ---------------------------------------------------------------------------
// Synthetic grid

enum class SolverKind { factored, projected };

struct GridSolver {
  SolverKind kind = SolverKind::factored;
  double lambda = 0.0;
  /// Inner rank of the factored form; 0 means d.
  int inner_rank = 0;
  /// Nuclear budget of the projected form; nullopt means the nuclear norm of the true core.
  std::optional<double> budget;
  SolverConfig config;
};

struct GridSpec {
  std::vector<long> m_values;
  std::vector<long> n_values;
  int runs_per_cell = 30;
  SynthConfig world;
  GridSolver solver;
  long test_size = 5000;
  std::uint64_t base_seed = 0;

  long m_max() const { return *std::max_element(m_values.begin(), m_values.end()); }
  long n_max() const { return *std::max_element(n_values.begin(), n_values.end()); }

  void validate() const {
    if (m_values.empty() || n_values.empty()) throw ConfigError("grid needs at least one M and one N value");
    for (long v : m_values)
      if (v < 1) throw ConfigError("all M values must be >= 1");
    for (long v : n_values)
      if (v < 1) throw ConfigError("all N values must be >= 1");
    if (runs_per_cell < 1) throw ConfigError("runs_per_cell must be >= 1");
    if (test_size < 1) throw ConfigError("test_size must be >= 1");
    world.validate();
    solver.config.validate();
    if (solver.inner_rank < 0 || solver.inner_rank > world.d) throw ConfigError("inner_rank must lie in [0, d]");
    if (!(solver.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (solver.budget && !(*solver.budget > 0.0)) throw ConfigError("budget must be > 0");
  }
};

struct RunRecord {
  long m_unlabeled = 0;
  long n_labeled = 0;
  int run = 0;
  double train_risk = 0.0;
  double test_risk = 0.0;
  double gap = 0.0;  // test_risk - train_risk
  double dist_u = 0.0;
  double dist_v = 0.0;
  std::uint64_t seed = 0;
  std::string error;  // empty unless the cell failed
};

/// Fit the core on fixed side information with the configured solver.
inline FitResult fit_with(const GridSolver& solver, const SideInfo& side, std::span<const LabeledEntry> labeled,
                          const LossSpec& loss, double default_budget) {
  if (solver.kind == SolverKind::projected)
    return fit_projected(side, labeled, solver.budget.value_or(default_budget), loss, solver.config);
  const int k = solver.inner_rank > 0 ? solver.inner_rank : side.d();
  return fit_factored(side, labeled, solver.lambda, k, loss, solver.config);
}

/// All records for one run index across the grid. Every cell of a run shares
/// the world and uses prefixes of the same sample streams.
inline std::vector<RunRecord> run_grid_single(const GridSpec& spec, int run) {
  const std::uint64_t world_seed = derive_seed(spec.base_seed, "world", static_cast<std::uint64_t>(run));
  SynthConfig wcfg = spec.world;
  wcfg.seed = world_seed;
  const SynthWorld world = make_world(wcfg);
  const int d = wcfg.d;
  const SubspaceFactors truth = truncated_svd(world.pmf, d);

  const auto run_u = static_cast<std::uint64_t>(run);
  const ObservationSet unl = draw_unlabeled(world, spec.m_max(), derive_seed(spec.base_seed, "unlabeled", run_u));
  const ObservationSet lab =
      draw_labeled(world, spec.n_max(), wcfg.noise_sd, derive_seed(spec.base_seed, "labeled", run_u));
  const ObservationSet test =
      draw_labeled(world, spec.test_size, wcfg.noise_sd, derive_seed(spec.base_seed, "test", run_u));
  const std::vector<Entry> test_entries = label_entries(test.labeled);
  const std::vector<double> test_labels = label_values(test.labeled);
  const double true_budget = nuclear_norm(world.core_star);
  const LossSpec loss = LossSpec::squared();
  GridSolver solver = spec.solver;
  solver.config.seed = derive_seed(spec.base_seed, "solver", run_u);

  std::vector<RunRecord> out;
  for (long big_m : spec.m_values) {
    std::optional<SideInfo> side;
    double du = std::numeric_limits<double>::quiet_NaN(), dv = du;
    std::string side_error;
    try {
      const EmpiricalPMF pmf = empirical_pmf(std::span(unl.unlabeled).first(static_cast<std::size_t>(big_m)),
                                             world.m(), world.n());
      const SubspaceFactors f = truncated_svd(pmf.dense(), d);
      du = procrustes_distance(f.u, truth.u).distance;
      dv = procrustes_distance(f.v, truth.v).distance;
      side = side_info(f, world.m(), world.n());
    } catch (const std::exception& e) {
      side_error = e.what();
    }
    for (long big_n : spec.n_values) {
      RunRecord rec;
      rec.m_unlabeled = big_m;
      rec.n_labeled = big_n;
      rec.run = run;
      rec.seed = world_seed;
      rec.dist_u = du;
      rec.dist_v = dv;
      if (!side) {
        rec.train_risk = rec.test_risk = rec.gap = std::numeric_limits<double>::quiet_NaN();
        rec.error = side_error;
        out.push_back(std::move(rec));
        continue;
      }
      try {
        const auto labeled = std::span(lab.labeled).first(static_cast<std::size_t>(big_n));
        const FitResult fit = fit_with(solver, *side, labeled, loss, true_budget);
        const std::vector<double> preds = predict(*side, fit.core, test_entries);
        rec.train_risk = fit.train_risk;
        rec.test_risk = empirical_risk(preds, test_labels, loss);
        rec.gap = rec.test_risk - rec.train_risk;
      } catch (const std::exception& e) {
        rec.train_risk = rec.test_risk = rec.gap = std::numeric_limits<double>::quiet_NaN();
        rec.error = e.what();
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

/// Runs every (M, N, run) cell; output is sorted by (M, N, run) independent of `jobs`.
inline std::vector<RunRecord> run_grid(const GridSpec& spec, int jobs = 1) {
  spec.validate();
  const int runs = spec.runs_per_cell;
  std::vector<std::vector<RunRecord>> per_run(static_cast<std::size_t>(runs));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < runs; r = next++) {
      try {
        per_run[static_cast<std::size_t>(r)] = run_grid_single(spec, r);
      } catch (const std::exception& e) {
        // World generation itself failed: record every cell of this run as failed.
        std::vector<RunRecord> failed;
        for (long big_m : spec.m_values)
          for (long big_n : spec.n_values) {
            RunRecord rec;
            rec.m_unlabeled = big_m;
            rec.n_labeled = big_n;
            rec.run = r;
            rec.seed = derive_seed(spec.base_seed, "world", static_cast<std::uint64_t>(r));
            rec.train_risk = rec.test_risk = rec.gap = rec.dist_u = rec.dist_v =
                std::numeric_limits<double>::quiet_NaN();
            rec.error = e.what();
            failed.push_back(std::move(rec));
          }
        per_run[static_cast<std::size_t>(r)] = std::move(failed);
      }
      log::debug("grid run " + std::to_string(r) + " done");
    }
  };
  const int threads = std::clamp(jobs, 1, runs);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::vector<RunRecord> all;
  for (auto& v : per_run)
    for (auto& rec : v) all.push_back(std::move(rec));
  std::sort(all.begin(), all.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::tie(a.m_unlabeled, a.n_labeled, a.run) < std::tie(b.m_unlabeled, b.n_labeled, b.run);
  });
  return all;
}

using Cell = std::pair<long, long>;  // (M, N)
using CellMeans = std::map<Cell, double>;

/// Mean gap per (M, N) cell over runs with a finite gap.
inline CellMeans cell_mean_gaps(std::span<const RunRecord> records) {
  std::map<Cell, std::pair<double, int>> acc;
  for (const auto& r : records) {
    if (!std::isfinite(r.gap)) continue;
    auto& slot = acc[{r.m_unlabeled, r.n_labeled}];
    slot.first += r.gap;
    slot.second += 1;
  }
  CellMeans out;
  for (const auto& [cell, sum] : acc) out[cell] = sum.first / sum.second;
  return out;
}

inline double disentangled_estimate(const CellMeans& means, long big_m, long big_n, long m_max, long n_max) {
  auto get = [&](long a, long b) {
    auto it = means.find({a, b});
    if (it == means.end())
      throw ArgumentError("disentangled_estimate: missing cell (M=" + std::to_string(a) + ", N=" + std::to_string(b) + ")");
    return it->second;
  };
  return get(big_m, n_max) + get(m_max, big_n);
}

inline double disentangled_estimate(std::span<const RunRecord> records, long big_m, long big_n, long m_max,
                                    long n_max) {
  return disentangled_estimate(cell_mean_gaps(records), big_m, big_n, m_max, n_max);
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("pearson: length mismatch");
  if (x.size() < 2) throw NumericalError("undefined correlation: fewer than two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw NumericalError("undefined correlation: zero-variance series");
  return sxy / std::sqrt(sxx * syy);
}

struct ScatterPoint {
  long m_unlabeled = 0;
  long n_labeled = 0;
  double mean_gap = 0.0;
  double disentangled_estimate = 0.0;
};

struct CorrelationReport {
  double pearson_r = 0.0;
  std::vector<ScatterPoint> points;
};

/// One point per cell with a finite mean gap; cells whose reference cells
/// (M, N_max) or (M_max, N) have no finite runs are skipped.
inline std::vector<ScatterPoint> scatter_points(const CellMeans& means, long m_max, long n_max) {
  std::vector<ScatterPoint> out;
  for (const auto& [cell, gap] : means) {
    if (!means.count({cell.first, n_max}) || !means.count({m_max, cell.second})) {
      log::warn("skipping cell (M=" + std::to_string(cell.first) + ", N=" + std::to_string(cell.second) +
                "): reference cell has no finite runs");
      continue;
    }
    out.push_back({cell.first, cell.second, gap, disentangled_estimate(means, cell.first, cell.second, m_max, n_max)});
  }
  return out;
}

inline CorrelationReport correlation_report(std::span<const RunRecord> records, long m_max, long n_max) {
  CorrelationReport rep;
  rep.points = scatter_points(cell_mean_gaps(records), m_max, n_max);
  std::vector<double> gaps, ests;
  for (const auto& p : rep.points) {
    gaps.push_back(p.mean_gap);
    ests.push_back(p.disentangled_estimate);
  }
  rep.pearson_r = pearson(gaps, ests);
  return rep;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string format_g10(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_grid_csv(std::ostream& os, std::span<const RunRecord> records) {
  os << "m_unlabeled,n_labeled,run,train_risk,test_risk,gap,dist_u,dist_v,seed\n";
  for (const auto& r : records)
    os << r.m_unlabeled << ',' << r.n_labeled << ',' << r.run << ',' << format_g10(r.train_risk) << ','
       << format_g10(r.test_risk) << ',' << format_g10(r.gap) << ',' << format_g10(r.dist_u) << ','
       << format_g10(r.dist_v) << ',' << r.seed << '\n';
}

inline void write_scatter_csv(std::ostream& os, std::span<const ScatterPoint> points) {
  os << "m_unlabeled,n_labeled,mean_gap,disentangled_estimate\n";
  for (const auto& p : points)
    os << p.m_unlabeled << ',' << p.n_labeled << ',' << format_g10(p.mean_gap) << ','
       << format_g10(p.disentangled_estimate) << '\n';
}

// ---------------------------------------------------------------------------
// Rating data

struct Rating {
  int user = 0;
  int item = 0;
  double value = 0.0;
  long timestamp = 0;
};

struct RatingDataset {
  std::vector<Rating> ratings;
  int num_users = 0;
  int num_items = 0;
  std::vector<long> user_ids;  // original id per dense user index
  std::vector<long> item_ids;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<long> dense_reindex(std::vector<long> raw, std::vector<int>& index_out) {
  std::vector<long> ids = raw;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  index_out.resize(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k)
    index_out[k] = static_cast<int>(std::lower_bound(ids.begin(), ids.end(), raw[k]) - ids.begin());
  return ids;
}

}  // namespace detail

/// Parses `user<TAB>item<TAB>rating<TAB>timestamp` lines and re-indexes ids to 0-based dense ranges.
inline RatingDataset parse_ratings(std::istream& in) {
  std::vector<long> users, items;
  std::vector<double> values;
  std::vector<long> stamps;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 4) throw ParseError("expected 4 tab-separated fields, got " + std::to_string(fields.size()), lineno);
    try {
      std::size_t pos = 0;
      const long u = std::stol(fields[0], &pos);
      if (pos != fields[0].size()) throw std::invalid_argument("user");
      const long i = std::stol(fields[1], &pos);
      if (pos != fields[1].size()) throw std::invalid_argument("item");
      const double r = std::stod(fields[2], &pos);
      if (pos != fields[2].size() || !std::isfinite(r)) throw std::invalid_argument("rating");
      const long t = std::stol(fields[3], &pos);
      if (pos != fields[3].size()) throw std::invalid_argument("timestamp");
      users.push_back(u);
      items.push_back(i);
      values.push_back(r);
      stamps.push_back(t);
    } catch (const std::exception&) {
      throw ParseError("malformed rating row '" + line + "'", lineno);
    }
  }
  if (values.empty()) throw ParseError("no rating rows found");

  RatingDataset ds;
  std::vector<int> uidx, iidx;
  ds.user_ids = detail::dense_reindex(users, uidx);
  ds.item_ids = detail::dense_reindex(items, iidx);
  ds.num_users = static_cast<int>(ds.user_ids.size());
  ds.num_items = static_cast<int>(ds.item_ids.size());
  ds.ratings.reserve(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) ds.ratings.push_back({uidx[k], iidx[k], values[k], stamps[k]});
  return ds;
}

inline RatingDataset load_ml100k(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rating file '" + path + "'");
  RatingDataset ds = parse_ratings(in);
  if (ds.ratings.size() != 100000 || ds.num_users != 943 || ds.num_items != 1682) {
    ds.warnings.push_back("cardinality (" + std::to_string(ds.num_users) + " users, " + std::to_string(ds.num_items) +
                          " items, " + std::to_string(ds.ratings.size()) +
                          " ratings) differs from canonical ML-100K (943, 1682, 100000)");
    log::warn(path + ": " + ds.warnings.back());
  }
  return ds;
}

struct MaskedSplit {
  std::vector<Rating> labeled;
  std::vector<Rating> unlabeled;  // rating kept only for bookkeeping; never used for fitting
};

/// Removes the label from a uniformly random ceil(p * count)-subset, preserving input order.
inline MaskedSplit mask_labels(std::span<const Rating> ratings, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("mask_labels: p must lie in [0, 1]");
  const double raw = p * static_cast<double>(ratings.size());
  const double nearest = std::round(raw);
  const auto removed = static_cast<std::size_t>(std::abs(raw - nearest) < 1e-9 ? nearest : std::ceil(raw));
  std::vector<std::size_t> order(ratings.size());
  std::iota(order.begin(), order.end(), 0);
  Engine rng = make_engine(seed, "mask_labels");
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> masked(ratings.size(), false);
  for (std::size_t k = 0; k < removed; ++k) masked[order[k]] = true;
  MaskedSplit out;
  for (std::size_t k = 0; k < ratings.size(); ++k) (masked[k] ? out.unlabeled : out.labeled).push_back(ratings[k]);
  return out;
}

/// Random exact-count split: round(train_fraction * count) ratings go to train.
inline std::pair<std::vector<Rating>, std::vector<Rating>> split_train_test(std::span<const Rating> ratings,
                                                                             double train_fraction,
                                                                             std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw ArgumentError("train_fraction must lie in [0, 1]");
  const auto n_train = static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(ratings.size())));
  std::vector<std::size_t> order(ratings.size());
  std::iota(order.begin(), order.end(), 0);
  Engine rng = make_engine(seed, "train_test_split");
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_train(ratings.size(), false);
  for (std::size_t k = 0; k < n_train; ++k) is_train[order[k]] = true;
  std::pair<std::vector<Rating>, std::vector<Rating>> out;
  for (std::size_t k = 0; k < ratings.size(); ++k) (is_train[k] ? out.first : out.second).push_back(ratings[k]);
  return out;
}

inline double rmse(std::span<const double> predictions, std::span<const double> truths) {
  if (predictions.size() != truths.size()) throw ArgumentError("rmse: length mismatch");
  if (predictions.empty()) throw ArgumentError("rmse: empty input");
  double sse = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) sse += (predictions[k] - truths[k]) * (predictions[k] - truths[k]);
  return std::sqrt(sse / static_cast<double>(predictions.size()));
}

// ---------------------------------------------------------------------------
// Real-data protocol

enum class RealMethod { damc, softimpute, userknn };

inline const char* to_string(RealMethod m) {
  switch (m) {
    case RealMethod::damc: return "damc";
    case RealMethod::softimpute: return "softimpute";
    case RealMethod::userknn: return "userknn";
  }
  return "?";
}

inline RealMethod parse_method(const std::string& s) {
  if (s == "damc") return RealMethod::damc;
  if (s == "softimpute") return RealMethod::softimpute;
  if (s == "userknn") return RealMethod::userknn;
  throw ConfigError("unknown method '" + s + "' (expected damc, softimpute or userknn)");
}

struct DamcRealConfig {
  int d = 40;
  /// Candidate penalties for the factored fit, chosen on a validation split;
  /// a single value skips validation.
  std::vector<double> lambda_grid{1e-4, 3e-4, 1e-3, 3e-3, 1e-2};
  double validation_fraction = 0.1;
  /// Fit the core to labels minus their mean and add the mean back.
  bool center_labels = true;
  SolverConfig solver{.max_iters = 500, .step_size = std::nullopt, .tolerance = 1e-7, .init_scale = std::nullopt, .seed = 0};
};

struct RealDataConfig {
  std::string dataset_path;
  std::string dataset_name = "ml-100k";
  double label_removal_p = 0.0;
  double train_fraction = 0.8;
  RealMethod method = RealMethod::damc;
  DamcRealConfig damc;
  SoftImputeConfig softimpute{.lambda = 1.0, .max_rank = 60, .max_iters = 100, .tolerance = 1e-4, .power_iterations = 2, .seed = 0};
  std::vector<double> softimpute_multipliers{0.5, 1, 2, 5, 10, 20};
  double softimpute_validation_fraction = 0.1;
  /// Off by default: plain SoftImpute starts unobserved cells at zero.
  bool softimpute_center = false;
  KnnConfig knn;
  ClipRange clip{1.0, 5.0};
  std::uint64_t seed = 0;

  void validate() const {
    if (!(label_removal_p >= 0.0 && label_removal_p <= 1.0)) throw ConfigError("p must lie in [0, 1]");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
    if (damc.d < 1) throw ConfigError("damc.d must be >= 1");
    if (damc.lambda_grid.empty()) throw ConfigError("damc.lambda_grid must not be empty");
    softimpute.validate();
    knn.validate();
  }
};

struct RealResult {
  std::string dataset;
  std::string method;
  double p = 0.0;
  double rmse = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_labeled = 0;
  std::size_t n_unlabeled = 0;
  double chosen_lambda = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::vector<LabeledEntry> to_labeled(std::span<const Rating> rs, double offset = 0.0) {
  std::vector<LabeledEntry> out;
  out.reserve(rs.size());
  for (const auto& r : rs) out.push_back({{r.user, r.item}, r.value - offset});
  return out;
}

inline std::vector<Entry> to_entries(std::span<const Rating> rs) {
  std::vector<Entry> out;
  out.reserve(rs.size());
  for (const auto& r : rs) out.push_back({r.user, r.item});
  return out;
}

struct DamcModel {
  SideInfo side;
  Matrix core;
  double offset = 0.0;
  double lambda = 0.0;
};

inline std::vector<double> damc_predict(const DamcModel& model, std::span<const Entry> entries, ClipRange clip) {
  std::vector<double> p = predict(model.side, model.core, entries);
  for (double& v : p) v = clip.apply(v + model.offset);
  return p;
}

inline DamcModel fit_damc_real(std::span<const Rating> interactions, std::span<const Rating> labeled, int m, int n,
                               const DamcRealConfig& cfg, ClipRange clip, std::uint64_t seed) {
  if (labeled.empty()) throw ArgumentError("damc: no labeled data to fit the core matrix");
  const int d = std::min({cfg.d, m, n});
  const std::vector<Entry> pairs = to_entries(interactions);
  const EmpiricalPMF pmf = empirical_pmf(pairs, m, n);
  SvdOptions svd_opt;
  svd_opt.seed = derive_seed(seed, "damc_svd");
  DamcModel model;
  model.side = side_info(truncated_svd(pmf.dense(), d, svd_opt), m, n);
  if (cfg.center_labels) {
    double s = 0.0;
    for (const auto& r : labeled) s += r.value;
    model.offset = s / static_cast<double>(labeled.size());
  }
  SolverConfig scfg = cfg.solver;
  scfg.seed = derive_seed(seed, "damc_solver");
  const LossSpec loss = LossSpec::squared();

  model.lambda = cfg.lambda_grid.front();
  if (cfg.lambda_grid.size() > 1 && labeled.size() >= 10) {
    std::vector<std::size_t> order(labeled.size());
    std::iota(order.begin(), order.end(), 0);
    Engine rng = make_engine(seed, "damc_validation");
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.validation_fraction * labeled.size()));
    std::vector<Rating> train, valid;
    for (std::size_t k = 0; k < order.size(); ++k) (k < n_val ? valid : train).push_back(labeled[order[k]]);
    const std::vector<LabeledEntry> train_l = to_labeled(train, model.offset);
    const std::vector<Entry> valid_e = to_entries(valid);
    std::vector<double> valid_y;
    for (const auto& r : valid) valid_y.push_back(r.value);
    double best = std::numeric_limits<double>::infinity();
    for (double lambda : cfg.lambda_grid) {
      const FitResult fit = fit_factored(model.side, train_l, lambda, d, loss, scfg);
      DamcModel trial{model.side, fit.core, model.offset, lambda};
      const double err = rmse(damc_predict(trial, valid_e, clip), valid_y);
      log::debug("damc lambda " + format_g10(lambda) + " validation rmse " + format_g10(err));
      if (err < best) {
        best = err;
        model.lambda = lambda;
      }
    }
  }
  const std::vector<LabeledEntry> all_l = to_labeled(labeled, model.offset);
  model.core = fit_factored(model.side, all_l, model.lambda, d, loss, scfg).core;
  return model;
}

}  // namespace detail

inline RealResult run_real(const RealDataConfig& cfg, const RatingDataset& data) {
  cfg.validate();
  const int m = data.num_users, n = data.num_items;
  auto [train, test] = split_train_test(data.ratings, cfg.train_fraction, derive_seed(cfg.seed, "split"));
  if (test.empty()) throw ArgumentError("run_real: empty test split");
  const MaskedSplit masked = mask_labels(train, cfg.label_removal_p, derive_seed(cfg.seed, "mask"));

  RealResult res;
  res.dataset = cfg.dataset_name;
  res.method = to_string(cfg.method);
  res.p = cfg.label_removal_p;
  res.seed = cfg.seed;
  res.n_labeled = masked.labeled.size();
  res.n_unlabeled = masked.unlabeled.size();

  const std::vector<Entry> test_entries = detail::to_entries(test);
  std::vector<double> truths;
  truths.reserve(test.size());
  for (const auto& r : test) truths.push_back(r.value);

  std::vector<double> preds;
  switch (cfg.method) {
    case RealMethod::damc: {
      const detail::DamcModel model =
          detail::fit_damc_real(train, masked.labeled, m, n, cfg.damc, cfg.clip, derive_seed(cfg.seed, "damc"));
      res.chosen_lambda = model.lambda;
      preds = detail::damc_predict(model, test_entries, cfg.clip);
      break;
    }
    case RealMethod::softimpute: {
      if (masked.labeled.empty()) throw ArgumentError("softimpute: no labeled data");
      double offset = 0.0;
      if (cfg.softimpute_center) {
        for (const auto& r : masked.labeled) offset += r.value;
        offset /= static_cast<double>(masked.labeled.size());
      }
      const std::vector<LabeledEntry> labeled = detail::to_labeled(masked.labeled, offset);
      const ClipRange shifted{cfg.clip.lo - offset, cfg.clip.hi - offset};
      SoftImputeConfig scfg = cfg.softimpute;
      scfg.seed = derive_seed(cfg.seed, "softimpute");
      if (labeled.size() >= 10 && cfg.softimpute_multipliers.size() > 1) {
        scfg.lambda = tune_softimpute(labeled, m, n, scfg, cfg.softimpute_multipliers,
                                      cfg.softimpute_validation_fraction, derive_seed(cfg.seed, "softimpute_tune"),
                                      shifted)
                          .lambda;
      }
      res.chosen_lambda = scfg.lambda;
      const SoftImputeResult fit = softimpute_fit(labeled, m, n, scfg);
      for (const Entry& e : test_entries) preds.push_back(cfg.clip.apply(fit.completion(e.row, e.col) + offset));
      break;
    }
    case RealMethod::userknn: {
      if (masked.labeled.empty()) throw ArgumentError("userknn: no labeled data");
      const std::vector<LabeledEntry> labeled = detail::to_labeled(masked.labeled);
      preds = knn_predict(labeled, test_entries, m, n, cfg.knn);
      for (double& v : preds) v = cfg.clip.apply(v);
      break;
    }
  }
  res.rmse = rmse(preds, truths);
  return res;
}

inline RealResult run_real(const RealDataConfig& cfg) { return run_real(cfg, load_ml100k(cfg.dataset_path)); }

inline void write_real_csv_header(std::ostream& os) { os << "dataset,method,p,rmse,seed\n"; }

inline void write_real_csv_row(std::ostream& os, const RealResult& r) {
  os << r.dataset << ',' << r.method << ',' << format_g10(r.p) << ',' << format_g10(r.rmse) << ',' << r.seed << '\n';
}

}  // namespace damc
