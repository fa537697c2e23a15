// bridgesim: Markov bridge simulation and checks driven by a JSON scenario.
//
// Exit codes: 0 success / all checks passed, 1 numerical or statistical
// failure, 2 usage or configuration error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bridgesim/config.hpp"
#include "bridgesim/errors.hpp"
#include "bridgesim/scale_speed.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bridgesim;

namespace {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

Level log_level() {
  const char* env = std::getenv("BRIDGESIM_LOG");
  if (!env) return Level::warn;
  std::string v(env);
  if (v == "error") return Level::error;
  if (v == "info") return Level::info;
  if (v == "debug") return Level::debug;
  return Level::warn;
}

void log(Level lvl, const std::string& msg) {
  static const Level threshold = log_level();
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (lvl <= threshold) std::cerr << "bridgesim [" << names[static_cast<int>(lvl)] << "] " << msg << '\n';
}

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

ScenarioConfig scenario(const Globals& g) {
  ScenarioConfig cfg = g.config.empty() ? default_config() : load_config(g.config);
  if (g.seed) cfg.master_seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  return cfg;
}

std::ofstream open_out(const ScenarioConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out_dir);
  fs::path p = fs::path(cfg.out_dir) / name;
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  log(Level::info, "writing " + p.string());
  return os;
}

json stats_json(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
}

json node_summary(double t, const std::vector<Vector>& states, int d) {
  json mean = json::array(), var = json::array();
  const double n = static_cast<double>(states.size());
  for (int i = 0; i < d; ++i) {
    double m = 0.0;
    for (const auto& x : states) m += x(i);
    m /= n;
    double ss = 0.0;
    for (const auto& x : states) ss += (x(i) - m) * (x(i) - m);
    mean.push_back(stats_json(m));
    var.push_back(stats_json(states.size() > 1 ? ss / (n - 1.0) : 0.0));
  }
  return {{"t", t}, {"mean", mean}, {"variance", var}, {"n", states.size()}};
}

int cmd_simulate(const Globals& g) {
  ScenarioConfig cfg = scenario(g);
  auto t0 = std::chrono::steady_clock::now();
  ModelPtr model = build_model(cfg);
  TimeGrid grid = build_grid(cfg);
  EnsembleOptions eo;
  eo.threads = g.threads;
  eo.stride = cfg.stride;
  eo.scheme = cfg.scheme;
  PathEnsemble ens;
  if (cfg.conditioning == ConditioningKind::none) {
    ens = simulate_unconditioned(model, cfg.start_time, cfg.start, grid, cfg.n_paths,
                                 cfg.master_seed, eo, cfg.scheme == Scheme::exact);
  } else {
    auto bp = BridgeProcess::make(model, build_h(cfg, model), cfg.start_time, cfg.start);
    ens = simulate_ensemble(bp, grid, cfg.n_paths, cfg.master_seed, eo);
  }
  log(Level::info, "simulated " + std::to_string(cfg.n_paths) + " paths in " +
                       std::to_string(std::chrono::duration<double>(
                                          std::chrono::steady_clock::now() - t0).count()) + " s");

  if (cfg.write_paths) {
    auto os = open_out(cfg, "paths.csv");
    write_paths_csv(os, ens);
  }

  json nodes = json::array();
  for (std::size_t q = 0; q < ens.recorded.size(); ++q)
    nodes.push_back(node_summary(ens.grid.nodes[ens.recorded[q]], ens.marginal_states(q), ens.dim));
  json summary;
  summary["model"] = std::string(to_string(cfg.model));
  summary["n_paths"] = cfg.n_paths;
  summary["master_seed"] = cfg.master_seed;
  summary["horizon"] = cfg.horizon;
  summary["grid"] = {{"steps", grid.steps()}, {"delta_min", grid.delta_min()}};
  summary["nodes"] = nodes;
  std::vector<Vector> term;
  for (const auto& p : ens.paths)
    if (!p.diagnostics.failed && p.terminal) term.push_back(*p.terminal);
  if (!term.empty()) summary["terminal"] = node_summary(grid.horizon, term, ens.dim);
  if (cfg.conditioning == ConditioningKind::strong) {
    std::size_t hits = 0;
    auto last = static_cast<Eigen::Index>(ens.recorded.size() - 1);
    for (const auto& p : ens.paths)
      if (!p.diagnostics.failed && (p.states.col(last) - cfg.target).norm() < 0.05) ++hits;
    summary["pinning_fraction"] = static_cast<double>(hits) / static_cast<double>(ens.paths.size());
    summary["pinning_tolerance"] = 0.05;
  }
  summary["diagnostics"] = {{"h_floor_events", ens.counters.h_floor_events},
                            {"domain_projections", ens.counters.domain_projections},
                            {"drift_caps", ens.counters.drift_caps},
                            {"resampled_paths", ens.counters.resampled_paths},
                            {"failed_paths", ens.counters.failed_paths}};
  auto os = open_out(cfg, "summary.json");
  os << summary.dump(2) << '\n';
  return 0;
}

int cmd_verify(const Globals& g, const std::string& suite) {
  if (!is_suite(suite)) {
    log(Level::error, "unknown suite '" + suite + "' (assumptions, bridge, martingale, appendixB, all)");
    return 2;
  }
  ScenarioConfig cfg = scenario(g);
  auto reports = run_suite(cfg, suite, g.threads);
  json arr = json::array();
  bool ok = !reports.empty();
  for (const auto& r : reports) {
    arr.push_back(to_json(r));
    ok = ok && r.pass;
    log(r.pass ? Level::info : Level::warn, r.name + (r.pass ? " passed" : " FAILED"));
  }
  std::cout << arr.dump(2) << '\n';
  if (cfg.write_reports && !g.out.empty()) {
    auto os = open_out(cfg, "report.json");
    os << arr.dump(2) << '\n';
  }
  return ok ? 0 : 1;
}

int cmd_classify(const Globals& g) {
  ScenarioConfig cfg = scenario(g);
  ModelPtr model = build_model(cfg);
  if (model->dim() != 1) {
    log(Level::error, "classify needs a 1-D model");
    return 2;
  }
  auto sf = std::make_shared<const ScaleFunction>(model->spec, cfg.start(0));
  SpeedDensity sd(sf);
  json arr = json::array();
  for (Endpoint e : {Endpoint::lower, Endpoint::upper}) arr.push_back(to_json(classify_boundary(sd, e)));
  std::cout << arr.dump(2) << '\n';
  return 0;
}

struct DensityArgs {
  std::optional<double> t;
  int points = 201;
  std::optional<double> lo, hi;
};

int cmd_density(const Globals& g, const DensityArgs& a) {
  ScenarioConfig cfg = scenario(g);
  ModelPtr model = build_model(cfg);
  if (model->dim() != 1) {
    log(Level::error, "density tabulation needs a 1-D model");
    return 2;
  }
  const double s = cfg.start_time, T = cfg.horizon;
  const double t = a.t.value_or(0.5 * (s + T));
  if (!(t > s && t < T)) {
    log(Level::error, "--t must lie in (s, T*)");
    return 2;
  }
  HFunction h = build_h(cfg, model);
  auto bp = BridgeProcess::make(model, h, s, cfg.start);
  const double spread = std::sqrt(a_matrix(model->spec, s, cfg.start)(0, 0) * (T - s));
  const double lower = model->spec.domain.lower(0);
  double lo = a.lo.value_or(std::max(cfg.start(0) - 5.0 * spread, lower + 1e-3 * spread));
  double hi = a.hi.value_or(cfg.start(0) + 5.0 * spread);
  if (!(lo < hi) || a.points < 2) {
    log(Level::error, "density grid needs lo < hi and at least 2 points");
    return 2;
  }
  auto os = open_out(cfg, "density.csv");
  os << "y,p,h,drift\n";
  char buf[128];
  for (int i = 0; i < a.points; ++i) {
    const double y = lo + (hi - lo) * i / (a.points - 1);
    const Vector Y = scalar_state(y);
    double p = 0.0, hv = 0.0, drift = std::nan("");
    if (model->spec.domain.interior(Y)) {
      p = transition_density(*model, s, t, cfg.start, Y);
      try {
        hv = h.value(t, Y);
        drift = bridge_drift(bp, t, Y)(0);
      } catch (const Error&) {
      }
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", y, p, hv, drift);
    os << buf;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate and verify Markov bridges built by Doob h-transforms"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Scenario JSON (default: Brownian bridge 0 -> 0 on [0, 1])");
  app.add_option("--out", g.out, "Output directory (overrides outputs.directory)");
  app.add_option("--seed", g.seed, "Master seed (overrides ensemble.master_seed)");
  app.add_option("--threads", g.threads, "Worker threads (default: machine parallelism)");

  auto* simulate = app.add_subcommand("simulate", "Write paths.csv and summary.json");
  std::string suite = "all";
  auto* verify = app.add_subcommand("verify", "Run a verification suite; JSON report on stdout");
  verify->add_option("suite", suite, "assumptions | bridge | martingale | appendixB | all");
  auto* classify = app.add_subcommand("classify", "Feller boundary classification (1-D)");
  DensityArgs da;
  auto* density = app.add_subcommand("density", "Tabulate p, h and the bridge drift to density.csv");
  density->add_option("--t", da.t, "Time of the tabulation (default: midpoint)");
  density->add_option("--points", da.points, "Number of grid points");
  density->add_option("--lo", da.lo, "Grid lower end");
  density->add_option("--hi", da.hi, "Grid upper end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(g);
    if (*verify) return cmd_verify(g, suite);
    if (*classify) return cmd_classify(g);
    if (*density) return cmd_density(g, da);
  } catch (const ConfigError& e) {
    log(Level::error, e.what());
    return 2;
  } catch (const EnsembleError& e) {
    log(Level::error, std::string("ensemble failed: ") + e.what());
    return 1;
  } catch (const std::exception& e) {
    log(Level::error, e.what());
    return 1;
  }
  return 2;
}
