#pragma once

// JSON layout for worlds, observation sets, factors, fits and bound reports,
// plus the config readers used by the CLI.
//
// Dense matrices are {"rows": r, "cols": c, "data": [row-major values]}.
// Unlabeled samples are [row, col] pairs, labeled samples [row, col, value].

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "damc/bounds.hpp"
#include "damc/error.hpp"
#include "damc/experiments.hpp"
#include "damc/imc.hpp"
#include "damc/subspace.hpp"
#include "damc/synthgen.hpp"

namespace damc {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Data objects

inline Json matrix_to_json(const Matrix& a) {
  Json data = Json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) data.push_back(a(i, j));
  return Json{{"rows", a.rows()}, {"cols", a.cols()}, {"data", std::move(data)}};
}

inline Matrix matrix_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw ConfigError("matrix must be an object with rows, cols, data");
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const Json& data = j.at("data");
  if (rows < 0 || cols < 0 || !data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ConfigError("matrix data length does not match rows * cols");
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) a(i, k) = data[static_cast<std::size_t>(i * cols + k)].get<double>();
  return a;
}

inline Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Json synth_config_to_json(const SynthConfig& c) {
  Json j{{"m", c.m},
         {"n", c.n},
         {"d", c.d},
         {"row_group_sizes", c.row_group_sizes},
         {"col_group_sizes", c.col_group_sizes},
         {"core_frobenius_norm", c.core_frobenius_norm},
         {"noise_sd", c.noise_sd},
         {"seed", c.seed}};
  if (c.p0) j["p0"] = matrix_to_json(*c.p0);
  return j;
}

inline Json world_to_json(const SynthWorld& w, const std::optional<SynthConfig>& cfg = std::nullopt) {
  Json j;
  j["format"] = "damc-world";
  j["version"] = 1;
  if (cfg) j["config"] = synth_config_to_json(*cfg);
  j["row_group"] = w.row_group;
  j["col_group"] = w.col_group;
  j["x_star"] = matrix_to_json(w.x_star);
  j["y_star"] = matrix_to_json(w.y_star);
  j["core_star"] = matrix_to_json(w.core_star);
  j["pmf"] = matrix_to_json(w.pmf);
  j["ground_truth"] = matrix_to_json(w.ground_truth);
  return j;
}

inline SynthWorld world_from_json(const Json& j) {
  if (j.value("format", std::string{}) != "damc-world") throw ConfigError("not a damc-world document");
  SynthWorld w;
  w.row_group = j.at("row_group").get<std::vector<int>>();
  w.col_group = j.at("col_group").get<std::vector<int>>();
  w.x_star = matrix_from_json(j.at("x_star"));
  w.y_star = matrix_from_json(j.at("y_star"));
  w.core_star = matrix_from_json(j.at("core_star"));
  w.pmf = matrix_from_json(j.at("pmf"));
  w.ground_truth = matrix_from_json(j.at("ground_truth"));
  const auto m = w.pmf.rows(), n = w.pmf.cols(), d = w.core_star.rows();
  if (w.x_star.rows() != m || w.y_star.rows() != n || w.x_star.cols() != d || w.y_star.cols() != d ||
      w.core_star.cols() != d || w.ground_truth.rows() != m || w.ground_truth.cols() != n ||
      static_cast<Eigen::Index>(w.row_group.size()) != m || static_cast<Eigen::Index>(w.col_group.size()) != n)
    throw ConfigError("world document has inconsistent shapes");
  check_pmf(w.pmf);
  return w;
}

inline Json observations_to_json(const ObservationSet& obs) {
  Json unl = Json::array(), lab = Json::array();
  for (const Entry& e : obs.unlabeled) unl.push_back({e.row, e.col});
  for (const LabeledEntry& l : obs.labeled) lab.push_back({l.entry.row, l.entry.col, l.value});
  return Json{{"m", obs.m}, {"n", obs.n}, {"unlabeled", std::move(unl)}, {"labeled", std::move(lab)}};
}

inline ObservationSet observations_from_json(const Json& j) {
  ObservationSet obs;
  obs.m = j.at("m").get<int>();
  obs.n = j.at("n").get<int>();
  for (const Json& e : j.value("unlabeled", Json::array())) {
    if (!e.is_array() || e.size() != 2) throw ConfigError("unlabeled samples must be [row, col] pairs");
    obs.unlabeled.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  for (const Json& e : j.value("labeled", Json::array())) {
    if (!e.is_array() || e.size() != 3) throw ConfigError("labeled samples must be [row, col, value] triples");
    obs.labeled.push_back({{e[0].get<int>(), e[1].get<int>()}, e[2].get<double>()});
  }
  obs.validate();
  return obs;
}

inline Json factors_to_json(const SubspaceFactors& f) {
  return Json{{"u", matrix_to_json(f.u)}, {"sigma", vector_to_json(f.sigma)}, {"v", matrix_to_json(f.v)}};
}

inline Json solver_config_to_json(const SolverConfig& c) {
  Json j{{"max_iters", c.max_iters}};
  j["step_size"] = c.step_size ? Json(*c.step_size) : Json(nullptr);
  j["tolerance"] = c.tolerance;
  j["init_scale"] = c.init_scale ? Json(*c.init_scale) : Json(nullptr);
  j["seed"] = c.seed;
  return j;
}

inline Json fit_to_json(const FitResult& r, const Json& config_echo = Json::object()) {
  Json j;
  j["core"] = matrix_to_json(r.core);
  if (r.a.size() > 0) {
    j["a"] = matrix_to_json(r.a);
    j["b"] = matrix_to_json(r.b);
  }
  j["objective_trace"] = r.objective_trace;
  j["train_risk"] = r.train_risk;
  j["nuclear_norm"] = r.nuclear_norm;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["config"] = config_echo;
  return j;
}

inline Json constants_to_json(const AssumptionConstants& c) {
  return Json{{"kappa1", c.kappa1},
              {"kappa2", c.kappa2},
              {"kappa_star", c.kappa_star},
              {"gamma", c.gamma},
              {"p_star", c.p_star},
              {"x_star", c.x_star},
              {"y_star", c.y_star},
              {"script_p_star", c.script_p_star},
              {"r", c.r},
              {"spectral_norm", c.spectral_norm},
              {"eigengap", c.eigengap},
              {"d", c.d},
              {"nuclear_budget", c.nuclear_budget}};
}

inline Json bound_report_to_json(const BoundReport& r) {
  return Json{{"term_hoeffding", r.term_hoeffding},
              {"term_labeled", r.term_labeled},
              {"term_unlabeled", r.term_unlabeled},
              {"term_cross", r.term_cross},
              {"total", r.total},
              {"m_condition_threshold", r.m_condition_threshold},
              {"m_condition_met", r.m_condition_met},
              {"delta", r.delta},
              {"m_unlabeled", r.m_unlabeled},
              {"n_labeled", r.n_labeled},
              {"form", r.form == BoundForm::main ? "main" : "appendix"}};
}

// ---------------------------------------------------------------------------
// Config documents

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Applies `a.b.c=value`; value is parsed as JSON when possible, else taken as a string.
inline void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;
  }
  Json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override path '" + path + "' has an empty component");
    parts.push_back(part);
  }
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::string& key = parts[k];
    const bool last = k + 1 == parts.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(key);
      } catch (const std::exception&) {
        throw ConfigError("override path '" + path + "': '" + key + "' is not an array index");
      }
      if (idx >= node->size()) throw ConfigError("override path '" + path + "': index out of range");
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = Json::object();
      if (!node->is_object()) throw ConfigError("override path '" + path + "' descends into a scalar");
      node = &(*node)[key];
    }
    if (last) *node = value;
  }
}

namespace detail {

/// Reads fields of a config object and rejects keys nobody asked for.
class ConfigReader {
 public:
  ConfigReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(where_ + ": missing required field '" + key + "'");
    return convert<T>(key);
  }

  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError(where_ + ": unknown field '" + item.key() + "'");
  }

 private:
  template <typename T>
  T convert(const std::string& key) {
    try {
      return j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline SynthConfig synth_config_from_json(const Json& j, const std::string& where = "world") {
  detail::ConfigReader r(j, where);
  SynthConfig c;
  c.m = r.get("m", c.m);
  c.n = r.get("n", c.n);
  c.d = r.get("d", c.d);
  c.row_group_sizes = r.get("row_group_sizes", c.row_group_sizes);
  c.col_group_sizes = r.get("col_group_sizes", c.col_group_sizes);
  c.core_frobenius_norm = r.get("core_frobenius_norm", c.core_frobenius_norm);
  c.noise_sd = r.get("noise_sd", c.noise_sd);
  c.seed = r.get("seed", c.seed);
  if (r.has("p0")) c.p0 = matrix_from_json(r.raw("p0"));
  r.finish();
  c.validate();
  return c;
}

/// Reads solver fields from an object that may carry other keys handled by the caller.
inline SolverConfig solver_config_from_reader(detail::ConfigReader& r, SolverConfig c = {}) {
  c.max_iters = r.get("max_iters", c.max_iters);
  if (r.has("step_size")) c.step_size = r.require<double>("step_size");
  c.tolerance = r.get("tolerance", c.tolerance);
  if (r.has("init_scale")) c.init_scale = r.require<double>("init_scale");
  c.seed = r.get("seed", c.seed);
  c.validate();
  return c;
}

inline SolverKind parse_solver_kind(const std::string& s) {
  if (s == "factored") return SolverKind::factored;
  if (s == "projected") return SolverKind::projected;
  throw ConfigError("unknown solver kind '" + s + "' (expected factored or projected)");
}

inline GridSolver grid_solver_from_json(const Json& j, const std::string& where = "solver") {
  detail::ConfigReader r(j, where);
  GridSolver s;
  s.kind = parse_solver_kind(r.get<std::string>("kind", "factored"));
  s.lambda = r.get("lambda", s.lambda);
  s.inner_rank = r.get("inner_rank", s.inner_rank);
  if (r.has("budget")) s.budget = r.require<double>("budget");
  s.config = solver_config_from_reader(r);
  r.finish();
  return s;
}

inline LossSpec loss_from_json(const Json& j, const std::string& where = "loss") {
  detail::ConfigReader r(j, where);
  const auto kind = r.get<std::string>("kind", "squared");
  LossSpec loss;
  if (kind == "squared") {
    loss = LossSpec::squared();
  } else if (kind == "absolute") {
    loss = LossSpec::absolute();
  } else if (kind == "clipped_squared") {
    if (!r.has("lo") || !r.has("hi")) throw ConfigError(where + ": clipped_squared needs lo and hi");
    loss = LossSpec::clipped_squared(r.require<double>("lo"), r.require<double>("hi"));
  } else {
    throw ConfigError(where + ": unknown loss kind '" + kind + "'");
  }
  r.finish();
  return loss;
}

inline GridSpec grid_spec_from_json(const Json& j) {
  detail::ConfigReader r(j, "grid");
  GridSpec g;
  g.m_values = r.require<std::vector<long>>("m_values");
  g.n_values = r.require<std::vector<long>>("n_values");
  g.runs_per_cell = r.get("runs_per_cell", g.runs_per_cell);
  g.test_size = r.get("test_size", g.test_size);
  g.base_seed = r.get("base_seed", g.base_seed);
  if (r.has("world")) g.world = synth_config_from_json(r.raw("world"), "world");
  if (r.has("solver")) g.solver = grid_solver_from_json(r.raw("solver"));
  r.finish();
  g.validate();
  return g;
}

struct RealSuiteConfig {
  RealDataConfig base;
  std::vector<RealMethod> methods;
  std::vector<double> p_values;
};

inline RealSuiteConfig real_suite_from_json(const Json& j) {
  detail::ConfigReader r(j, "real");
  RealSuiteConfig s;
  RealDataConfig& c = s.base;
  c.dataset_path = r.require<std::string>("dataset_path");
  c.dataset_name = r.get("dataset_name", c.dataset_name);
  c.train_fraction = r.get("train_fraction", c.train_fraction);
  c.seed = r.get("base_seed", c.seed);
  for (const auto& m : r.require<std::vector<std::string>>("methods")) s.methods.push_back(parse_method(m));
  s.p_values = r.require<std::vector<double>>("p_values");
  if (s.methods.empty() || s.p_values.empty()) throw ConfigError("real: methods and p_values must be nonempty");
  for (double p : s.p_values)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("real: every p must lie in [0, 1]");
  if (r.has("clip")) {
    const auto clip = r.require<std::vector<double>>("clip");
    if (clip.size() != 2 || !(clip[1] > clip[0])) throw ConfigError("real.clip must be [lo, hi] with hi > lo");
    c.clip = {clip[0], clip[1]};
  }
  if (r.has("damc")) {
    detail::ConfigReader d(r.raw("damc"), "real.damc");
    c.damc.d = d.get("d", c.damc.d);
    c.damc.lambda_grid = d.get("lambda_grid", c.damc.lambda_grid);
    c.damc.validation_fraction = d.get("validation_fraction", c.damc.validation_fraction);
    c.damc.center_labels = d.get("center_labels", c.damc.center_labels);
    c.damc.solver = solver_config_from_reader(d, c.damc.solver);
    d.finish();
  }
  if (r.has("softimpute")) {
    detail::ConfigReader d(r.raw("softimpute"), "real.softimpute");
    c.softimpute.lambda = d.get("lambda", c.softimpute.lambda);
    c.softimpute.max_rank = d.get("max_rank", c.softimpute.max_rank);
    c.softimpute.max_iters = d.get("max_iters", c.softimpute.max_iters);
    c.softimpute.tolerance = d.get("tolerance", c.softimpute.tolerance);
    c.softimpute.power_iterations = d.get("power_iterations", c.softimpute.power_iterations);
    c.softimpute_multipliers = d.get("multipliers", c.softimpute_multipliers);
    c.softimpute_validation_fraction = d.get("validation_fraction", c.softimpute_validation_fraction);
    c.softimpute_center = d.get("center_labels", c.softimpute_center);
    d.finish();
  }
  if (r.has("knn")) {
    detail::ConfigReader d(r.raw("knn"), "real.knn");
    c.knn.k = d.get("k", c.knn.k);
    c.knn.min_overlap = d.get("min_overlap", c.knn.min_overlap);
    const auto fb = d.get<std::string>("fallback", "user_mean");
    if (fb == "user_mean") c.knn.fallback = KnnFallback::user_mean;
    else if (fb == "global_mean") c.knn.fallback = KnnFallback::global_mean;
    else throw ConfigError("real.knn.fallback must be user_mean or global_mean");
    d.finish();
  }
  r.finish();
  c.validate();
  return s;
}

}  // namespace damc
