#pragma once

// Command-line front end. Every command reads one JSON config (plus dotted
// --set overrides) and writes CSV/JSON artifacts. Exit codes: 0 ok,
// 2 configuration or usage error, 3 runtime or numerical failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "damc/bounds.hpp"
#include "damc/error.hpp"
#include "damc/experiments.hpp"
#include "damc/imc.hpp"
#include "damc/log.hpp"
#include "damc/serialize.hpp"
#include "damc/subspace.hpp"
#include "damc/synthgen.hpp"

namespace damc::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_runtime = 3;

using Row = std::pair<std::string, std::string>;

inline void print_table(std::ostream& os, const std::string& title, const std::vector<Row>& rows) {
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.first.size());
  os << title << '\n';
  for (const auto& r : rows) os << "  " << std::left << std::setw(static_cast<int>(width)) << r.first << "  " << r.second << '\n';
}

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec || !std::filesystem::is_directory(p)) throw ConfigError("cannot create output directory '" + dir + "'");
  return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

inline Json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  Json doc = read_json_file(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return doc;
}

// ---------------------------------------------------------------------------
// synth-grid

inline int cmd_synth_grid(const std::string& config_path, const std::string& out_dir, int jobs,
                          const std::vector<std::string>& overrides, std::ostream& out) {
  const Json doc = load_config(config_path, overrides);
  const GridSpec spec = grid_spec_from_json(doc);
  if (jobs < 1) throw ConfigError("--jobs must be >= 1");
  const auto dir = ensure_dir(out_dir);

  const std::vector<RunRecord> records = run_grid(spec, jobs);
  const long m_max = spec.m_max(), n_max = spec.n_max();
  const CellMeans means = cell_mean_gaps(records);
  const std::vector<ScatterPoint> points = scatter_points(means, m_max, n_max);

  std::ostringstream grid_csv, scatter_csv;
  write_grid_csv(grid_csv, records);
  write_scatter_csv(scatter_csv, points);
  write_text(dir / "grid.csv", grid_csv.str());
  write_text(dir / "scatter.csv", scatter_csv.str());

  Json summary;
  std::optional<double> r;
  try {
    std::vector<double> g, e;
    for (const auto& p : points) {
      g.push_back(p.mean_gap);
      e.push_back(p.disentangled_estimate);
    }
    r = pearson(g, e);
  } catch (const NumericalError& err) {
    log::warn(std::string("pearson_r unavailable: ") + err.what());
  }
  summary["pearson_r"] = r ? Json(*r) : Json(nullptr);
  summary["m_max"] = m_max;
  summary["n_max"] = n_max;
  summary["runs_per_cell"] = spec.runs_per_cell;
  Json cells = Json::array();
  for (const auto& [cell, gap] : means) cells.push_back({{"m_unlabeled", cell.first}, {"n_labeled", cell.second}, {"mean_gap", gap}});
  summary["cell_means"] = std::move(cells);
  Json errors = Json::array();
  for (const auto& rec : records)
    if (!rec.error.empty())
      errors.push_back({{"m_unlabeled", rec.m_unlabeled}, {"n_labeled", rec.n_labeled}, {"run", rec.run}, {"error", rec.error}});
  summary["errors"] = std::move(errors);
  summary["config"] = doc;
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  out << "wrote " << records.size() << " runs to " << (dir / "grid.csv").string() << '\n';
  out << "pearson_r " << (r ? format_g10(*r) : std::string("n/a")) << '\n';
  return exit_ok;
}

// ---------------------------------------------------------------------------
// bounds

struct BoundsInput {
  AssumptionConstants constants;
  int m = 0;
  int n = 0;
};

inline BoundsInput bounds_input_from(const SynthWorld& w, std::optional<double> budget) {
  BoundsInput in;
  in.m = w.m();
  in.n = w.n();
  in.constants = assumption_constants(w.pmf, w.x_star, w.y_star, budget.value_or(nuclear_norm(w.core_star)), w.d());
  return in;
}

inline int cmd_bounds(const std::string& config_path, const std::string& out_dir,
                      const std::vector<std::string>& overrides, std::ostream& out) {
  const Json doc = load_config(config_path, overrides);
  detail::ConfigReader r(doc, "bounds");
  const long big_m = r.require<long>("m_unlabeled");
  const long big_n = r.require<long>("n_labeled");
  const double delta = r.get("delta", 0.05);
  const auto form_s = r.get<std::string>("form", "main");
  if (form_s != "main" && form_s != "appendix") throw ConfigError("bounds.form must be main or appendix");
  const BoundForm form = form_s == "main" ? BoundForm::main : BoundForm::appendix;
  std::optional<double> budget;
  if (r.has("nuclear_budget")) budget = r.require<double>("nuclear_budget");

  LossConstants loss;
  const bool has_loss = r.has("loss"), has_lc = r.has("loss_constants");
  if (has_loss == has_lc) throw ConfigError("bounds: give exactly one of loss or loss_constants");
  if (has_loss) {
    const LossSpec spec = loss_from_json(r.raw("loss"));
    if (!spec.lipschitz() || !spec.bound())
      throw ConfigError(std::string("bounds: loss '") + to_string(spec.kind) +
                        "' violates the bounded Lipschitz loss assumption; use clipped_squared with lo and hi");
    loss = LossConstants::from(spec);
  } else {
    detail::ConfigReader lr(r.raw("loss_constants"), "bounds.loss_constants");
    loss.lipschitz = lr.require<double>("lipschitz");
    loss.bound = lr.require<double>("bound");
    lr.finish();
  }

  BoundsInput in;
  const int sources = static_cast<int>(r.has("world")) + static_cast<int>(r.has("world_file")) +
                      static_cast<int>(r.has("constants"));
  if (sources != 1) throw ConfigError("bounds: give exactly one of world, world_file or constants");
  if (r.has("world")) {
    in = bounds_input_from(make_world(synth_config_from_json(r.raw("world"))), budget);
  } else if (r.has("world_file")) {
    in = bounds_input_from(world_from_json(read_json_file(r.require<std::string>("world_file"))), budget);
  } else {
    detail::ConfigReader cr(r.raw("constants"), "bounds.constants");
    in.m = cr.require<int>("m");
    in.n = cr.require<int>("n");
    AssumptionConstants& c = in.constants;
    c.d = cr.require<int>("d");
    c.kappa1 = cr.get("kappa1", c.kappa1);
    c.kappa2 = cr.get("kappa2", c.kappa2);
    c.kappa_star = cr.get("kappa_star", c.kappa_star);
    c.gamma = cr.get("gamma", c.gamma);
    c.p_star = cr.get("p_star", c.p_star);
    c.x_star = cr.get("x_star", c.x_star);
    c.y_star = cr.get("y_star", c.y_star);
    c.script_p_star = cr.get("script_p_star", c.script_p_star);
    if (cr.has("r")) {
      c.r = cr.require<double>("r");
      c.nuclear_budget = std::sqrt(c.r) * c.d;
    } else {
      c.nuclear_budget = budget.value_or(static_cast<double>(c.d));
      c.r = c.nuclear_budget * c.nuclear_budget / (static_cast<double>(c.d) * c.d);
    }
    cr.finish();
    if (in.m < 1 || in.n < 1 || c.d < 1) throw ConfigError("bounds.constants: m, n, d must be >= 1");
  }
  r.finish();

  BoundReport rep;
  try {
    rep = theorem_bound(in.constants, in.m, in.n, big_m, big_n, delta, loss, form);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }

  const AssumptionConstants& c = in.constants;
  print_table(out, "assumption constants",
              {{"m", std::to_string(in.m)},
               {"n", std::to_string(in.n)},
               {"d", std::to_string(c.d)},
               {"kappa1", format_g10(c.kappa1)},
               {"kappa2", format_g10(c.kappa2)},
               {"kappa_star", format_g10(c.kappa_star)},
               {"gamma", format_g10(c.gamma)},
               {"p_star", format_g10(c.p_star)},
               {"x_star", format_g10(c.x_star)},
               {"y_star", format_g10(c.y_star)},
               {"script_p_star", format_g10(c.script_p_star)},
               {"nuclear_budget", format_g10(c.nuclear_budget)},
               {"r", format_g10(c.r)}});
  print_table(out, "bound (" + form_s + " form)",
              {{"M", std::to_string(big_m)},
               {"N", std::to_string(big_n)},
               {"delta", format_g10(delta)},
               {"term_hoeffding", format_g10(rep.term_hoeffding)},
               {"term_labeled", format_g10(rep.term_labeled)},
               {"term_unlabeled", format_g10(rep.term_unlabeled)},
               {"term_cross", format_g10(rep.term_cross)},
               {"total", format_g10(rep.total)},
               {"m_condition_threshold", format_g10(rep.m_condition_threshold)},
               {"m_condition_met", rep.m_condition_met ? "yes" : "no"}});

  const auto dir = ensure_dir(out_dir);
  Json j{{"constants", constants_to_json(c)}, {"report", bound_report_to_json(rep)}, {"m", in.m}, {"n", in.n},
         {"loss", {{"lipschitz", loss.lipschitz}, {"bound", loss.bound}}}};
  write_text(dir / "bounds.json", j.dump(2) + "\n");
  return exit_ok;
}

// ---------------------------------------------------------------------------
// real

inline int cmd_real(const std::string& config_path, const std::string& out_dir,
                    const std::vector<std::string>& overrides, std::ostream& out) {
  const Json doc = load_config(config_path, overrides);
  const RealSuiteConfig suite = real_suite_from_json(doc);
  const auto dir = ensure_dir(out_dir);
  const RatingDataset data = load_ml100k(suite.base.dataset_path);

  const auto csv_path = dir / "real.csv";
  const bool fresh = !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
  std::ofstream csv(csv_path, std::ios::binary | std::ios::app);
  if (!csv) throw ConfigError("cannot write '" + csv_path.string() + "'");
  if (fresh) write_real_csv_header(csv);
  for (RealMethod method : suite.methods)
    for (double p : suite.p_values) {
      RealDataConfig cfg = suite.base;
      cfg.method = method;
      cfg.label_removal_p = p;
      const RealResult res = run_real(cfg, data);
      write_real_csv_row(csv, res);
      csv.flush();
      out << res.dataset << ' ' << res.method << " p=" << format_g10(res.p) << " rmse=" << format_g10(res.rmse)
          << " labeled=" << res.n_labeled << '\n';
    }
  return exit_ok;
}

// ---------------------------------------------------------------------------
// fit / replay

struct PipelineOutcome {
  SubspaceFactors factors;
  FitResult fit;
  double dist_u = 0.0;
  double dist_v = 0.0;
  double excess_risk = 0.0;  // E_P[(prediction - ground truth)^2]
};

/// Subspace estimate from the unlabeled samples, then the core fit on the labeled ones.
inline PipelineOutcome run_pipeline(const SynthWorld& w, const ObservationSet& obs, const GridSolver& solver,
                                    const LossSpec& loss) {
  obs.validate();
  if (obs.m != w.m() || obs.n != w.n()) throw ConfigError("observations do not match the world's shape");
  const int d = w.d();
  PipelineOutcome o;
  const SubspaceFactors truth = truncated_svd(w.pmf, d);
  o.factors = truncated_svd(empirical_pmf(obs.unlabeled, w.m(), w.n()).dense(), d);
  o.dist_u = procrustes_distance(o.factors.u, truth.u).distance;
  o.dist_v = procrustes_distance(o.factors.v, truth.v).distance;
  const SideInfo side = side_info(o.factors, w.m(), w.n());
  o.fit = fit_with(solver, side, obs.labeled, loss, nuclear_norm(w.core_star));
  const Matrix pred = side.x * o.fit.core * side.y.transpose();
  o.excess_risk = (w.pmf.array() * (pred - w.ground_truth).array().square()).sum();
  return o;
}

inline Json grid_solver_to_json(const GridSolver& s) {
  Json j{{"kind", s.kind == SolverKind::factored ? "factored" : "projected"},
         {"lambda", s.lambda},
         {"inner_rank", s.inner_rank}};
  j["budget"] = s.budget ? Json(*s.budget) : Json(nullptr);
  const Json cfg = solver_config_to_json(s.config);
  for (const auto& item : cfg.items()) j[item.key()] = item.value();
  return j;
}

inline std::vector<Row> outcome_rows(const PipelineOutcome& o) {
  return {{"dist_u", format_g10(o.dist_u)},
          {"dist_v", format_g10(o.dist_v)},
          {"train_risk", format_g10(o.fit.train_risk)},
          {"excess_risk", format_g10(o.excess_risk)},
          {"core_nuclear_norm", format_g10(o.fit.nuclear_norm)},
          {"iterations", std::to_string(o.fit.iterations)},
          {"converged", o.fit.converged ? "yes" : "no"}};
}

inline int cmd_fit(const std::string& config_path, const std::string& out_dir,
                   const std::vector<std::string>& overrides, std::ostream& out) {
  const Json doc = load_config(config_path, overrides);
  detail::ConfigReader r(doc, "fit");
  const std::uint64_t base = r.get<std::uint64_t>("base_seed", 0);
  const long big_m = r.require<long>("m_unlabeled");
  const long big_n = r.require<long>("n_labeled");
  SynthConfig wcfg = r.has("world") ? synth_config_from_json(r.raw("world")) : SynthConfig{};
  if (!doc.contains("world") || !doc.at("world").contains("seed")) wcfg.seed = derive_seed(base, "world");
  GridSolver solver = r.has("solver") ? grid_solver_from_json(r.raw("solver")) : GridSolver{};
  if (!doc.contains("solver") || !doc.at("solver").contains("seed")) solver.config.seed = derive_seed(base, "solver");
  const LossSpec loss = r.has("loss") ? loss_from_json(r.raw("loss")) : LossSpec::squared();
  r.finish();
  if (big_m < 1 || big_n < 1) throw ConfigError("fit: m_unlabeled and n_labeled must be >= 1");

  const SynthWorld world = make_world(wcfg);
  ObservationSet obs = draw_unlabeled(world, big_m, derive_seed(base, "unlabeled"));
  obs.labeled = draw_labeled(world, big_n, wcfg.noise_sd, derive_seed(base, "labeled")).labeled;
  const PipelineOutcome o = run_pipeline(world, obs, solver, loss);

  const auto dir = ensure_dir(out_dir);
  Json echo{{"config", doc}, {"world", synth_config_to_json(wcfg)}, {"solver", grid_solver_to_json(solver)}};
  Json fit_json = fit_to_json(o.fit, echo);
  fit_json["dist_u"] = o.dist_u;
  fit_json["dist_v"] = o.dist_v;
  fit_json["excess_risk"] = o.excess_risk;
  write_text(dir / "fit.json", fit_json.dump(2) + "\n");

  Json world_doc = world_to_json(world, wcfg);
  world_doc["observations"] = observations_to_json(obs);
  world_doc["solver"] = grid_solver_to_json(solver);
  write_text(dir / "world.json", world_doc.dump() + "\n");

  print_table(out, "fit", outcome_rows(o));
  return exit_ok;
}

inline int cmd_replay(const std::string& world_path, const std::string& out_dir, std::ostream& out) {
  const Json doc = read_json_file(world_path);
  const SynthWorld world = world_from_json(doc);
  const int d = world.d();
  const SpectralDiagnostics sd = spectral_diagnostics(world.pmf, d);
  const AssumptionConstants c = assumption_constants(world.pmf, world.x_star, world.y_star, nuclear_norm(world.core_star), d);

  Json report{{"spectral", {{"spectral_norm", sd.spectral_norm},
                            {"eigengap", sd.eigengap},
                            {"condition", sd.condition},
                            {"leading_singular_values", vector_to_json(sd.leading_singular_values)}}},
              {"constants", constants_to_json(c)}};
  print_table(out, "world",
              {{"m", std::to_string(world.m())},
               {"n", std::to_string(world.n())},
               {"d", std::to_string(d)},
               {"spectral_norm", format_g10(sd.spectral_norm)},
               {"eigengap", format_g10(sd.eigengap)},
               {"kappa_star", format_g10(c.kappa_star)},
               {"kappa1", format_g10(c.kappa1)},
               {"gamma", format_g10(c.gamma)}});

  if (doc.contains("observations")) {
    const ObservationSet obs = observations_from_json(doc.at("observations"));
    if (!obs.unlabeled.empty() && !obs.labeled.empty()) {
      const GridSolver solver = doc.contains("solver") ? grid_solver_from_json(doc.at("solver")) : GridSolver{};
      const PipelineOutcome o = run_pipeline(world, obs, solver, LossSpec::squared());
      Json f = fit_to_json(o.fit, grid_solver_to_json(solver));
      f["dist_u"] = o.dist_u;
      f["dist_v"] = o.dist_v;
      f["excess_risk"] = o.excess_risk;
      report["fit"] = std::move(f);
      print_table(out, "replayed fit", outcome_rows(o));
    }
  }
  const auto dir = ensure_dir(out_dir);
  write_text(dir / "replay.json", report.dump(2) + "\n");
  return exit_ok;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"damc: subspace estimation from unlabeled samples plus inductive completion"};
  app.require_subcommand(1);
  std::string config, out_dir = ".", world;
  std::vector<std::string> overrides;
  int jobs = 1;

  auto* grid = app.add_subcommand("synth-grid", "run the synthetic (M, N) grid");
  grid->add_option("--config", config, "JSON grid config")->required();
  grid->add_option("--out", out_dir, "output directory")->required();
  grid->add_option("--jobs", jobs, "parallel runs");
  grid->add_option("--set", overrides, "dotted-path override key=value");

  auto* bounds = app.add_subcommand("bounds", "evaluate assumption constants and the bound");
  bounds->add_option("--config", config, "JSON bounds config")->required();
  bounds->add_option("--out", out_dir, "output directory (default .)");
  bounds->add_option("--set", overrides, "dotted-path override key=value");

  auto* real = app.add_subcommand("real", "masked-label comparison on a rating file");
  real->add_option("--config", config, "JSON real-data config")->required();
  real->add_option("--out", out_dir, "output directory")->required();
  real->add_option("--set", overrides, "dotted-path override key=value");

  auto* fit = app.add_subcommand("fit", "single synthetic fit");
  fit->add_option("--config", config, "JSON fit config")->required();
  fit->add_option("--out", out_dir, "output directory (default .)");
  fit->add_option("--set", overrides, "dotted-path override key=value");

  auto* replay = app.add_subcommand("replay", "re-evaluate a serialized world");
  replay->add_option("--world", world, "world JSON")->required();
  replay->add_option("--out", out_dir, "output directory (default .)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_config;
  }

  try {
    if (grid->parsed()) return cmd_synth_grid(config, out_dir, jobs, overrides, out);
    if (bounds->parsed()) return cmd_bounds(config, out_dir, overrides, out);
    if (real->parsed()) return cmd_real(config, out_dir, overrides, out);
    if (fit->parsed()) return cmd_fit(config, out_dir, overrides, out);
    if (replay->parsed()) return cmd_replay(world, out_dir, out);
  } catch (const ConfigError& e) {
    err << "damc: configuration error: " << e.what() << '\n';
    return exit_config;
  } catch (const ParseError& e) {
    err << "damc: input error: " << e.what() << '\n';
    return exit_config;
  } catch (const Json::exception& e) {
    err << "damc: configuration error: " << e.what() << '\n';
    return exit_config;
  } catch (const std::exception& e) {
    err << "damc: " << e.what() << '\n';
    return exit_runtime;
  }
  return exit_config;
}

}  // namespace damc::cli
