#include "bridgesim/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "bridgesim/errors.hpp"
#include "bridgesim/rng.hpp"

namespace bridgesim {

namespace {

using nlohmann::json;
constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError(field + ": " + what);
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) fail(field, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) fail(field, "must be finite");
  return v;
}

double number_or(const json& obj, const char* key, double fallback, const std::string& path) {
  if (!obj.contains(key)) return fallback;
  return number(obj.at(key), path + "." + key);
}

// A number, or null meaning `null_value` (open ends of regions).
double bound(const json& j, const std::string& field, double null_value) {
  if (j.is_null()) return null_value;
  return number(j, field);
}

Vector vector_of(const json& j, const std::string& field, double null_value = kInf,
                 bool allow_null = false) {
  std::vector<double> v;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      std::string f = field + "[" + std::to_string(i) + "]";
      v.push_back(allow_null ? bound(j[i], f, null_value) : number(j[i], f));
    }
  } else {
    v.push_back(allow_null ? bound(j, field, null_value) : number(j, field));
  }
  if (v.empty() || static_cast<int>(v.size()) > kMaxDim) fail(field, "dimension out of range");
  Vector out(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<int>(i)) = v[i];
  return out;
}

Matrix matrix_of(const json& j, const std::string& field) {
  if (j.is_number()) {
    Matrix m(1, 1);
    m(0, 0) = number(j, field);
    return m;
  }
  if (!j.is_array() || j.empty()) fail(field, "expected a matrix (array of rows)");
  const int rows = static_cast<int>(j.size());
  if (!j[0].is_array()) fail(field, "expected a matrix (array of rows)");
  const int cols = static_cast<int>(j[0].size());
  if (rows > kMaxDim || cols > kMaxDim || cols == 0) fail(field, "dimension out of range");
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<int>(j[r].size()) != cols) fail(field, "ragged matrix");
    for (int c = 0; c < cols; ++c)
      m(r, c) = number(j[r][c], field + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
  }
  return m;
}

const json& object_at(const json& doc, const char* key) {
  if (!doc.contains(key)) fail(key, "missing");
  const json& j = doc.at(key);
  if (!j.is_object()) fail(key, "expected an object");
  return j;
}

std::string string_at(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key)) fail(path + "." + key, "missing");
  if (!obj.at(key).is_string()) fail(path + "." + key, "expected a string");
  return obj.at(key).get<std::string>();
}

ModelParams parse_params(BuiltinModel name, const json& p, double horizon) {
  const std::string path = "model.params";
  switch (name) {
    case BuiltinModel::brownian: {
      BrownianParams bp;
      if (p.contains("dim")) {
        if (!p.at("dim").is_number_integer()) fail(path + ".dim", "expected an integer");
        bp.dim = p.at("dim").get<int>();
      }
      if (p.contains("drift")) bp.drift = vector_of(p.at("drift"), path + ".drift");
      bp.sigma = number_or(p, "sigma", 1.0, path);
      return bp;
    }
    case BuiltinModel::ou:
      return OuParams{number_or(p, "theta", 1.0, path), number_or(p, "mean", 0.0, path),
                      number_or(p, "sigma", 1.0, path)};
    case BuiltinModel::bessel: {
      BesselParams bp{number_or(p, "dimension", 3.0, path), false};
      if (p.contains("speed_measure")) {
        if (!p.at("speed_measure").is_boolean()) fail(path + ".speed_measure", "expected a boolean");
        bp.speed_measure = p.at("speed_measure").get<bool>();
      }
      return bp;
    }
    case BuiltinModel::geometric_bm:
      return GeometricBmParams{number_or(p, "mu", 0.0, path), number_or(p, "sigma", 1.0, path)};
    case BuiltinModel::linear_gaussian: {
      LinearGaussianParams lp;
      if (!p.contains("sigma")) fail(path + ".sigma", "missing");
      lp.sigma = matrix_of(p.at("sigma"), path + ".sigma");
      const int d = static_cast<int>(lp.sigma.rows());
      lp.b = p.contains("b") ? vector_of(p.at("b"), path + ".b") : Vector(Vector::Zero(d));
      lp.gamma = p.contains("gamma") ? matrix_of(p.at("gamma"), path + ".gamma")
                                     : Matrix(Matrix::Zero(d, d));
      lp.horizon = horizon;
      return lp;
    }
  }
  fail("model.name", "unknown model");
}

int params_dim(const ModelParams& p) {
  if (auto* b = std::get_if<BrownianParams>(&p)) return b->dim;
  if (auto* l = std::get_if<LinearGaussianParams>(&p)) return static_cast<int>(l->sigma.rows());
  return 1;
}

VerificationReport failed_report(const std::string& name, const std::exception& e) {
  VerificationReport r;
  r.name = name;
  r.pass = false;
  r.notes.push_back(std::string("error: ") + e.what());
  return r;
}

template <typename F>
void guarded(std::vector<VerificationReport>& out, const std::string& name, F&& fn) {
  try {
    out.push_back(fn());
  } catch (const Error& e) {
    out.push_back(failed_report(name, e));
  }
}

double kernel_spread(const ScenarioConfig& cfg, const ModelPtr& m) {
  Matrix a = a_matrix(m->spec, cfg.start_time, cfg.start);
  return std::sqrt(std::max(a(0, 0), 1e-300) * (cfg.horizon - cfg.start_time));
}

void suite_assumptions(const ScenarioConfig& cfg, std::vector<VerificationReport>& out) {
  ModelPtr m = build_model(cfg);
  const double span = cfg.horizon - cfg.start_time;
  const double sc = kernel_spread(cfg, m);
  const Vector x = cfg.start;
  Vector y = x;
  y(0) += sc;
  guarded(out, "chapman_kolmogorov",
          [&] { return chapman_kolmogorov_check(*m, 0.5 * span, span, x, y); });
  if (m->dim() != 1) return;
  const double z = cfg.conditioning == ConditioningKind::strong ? cfg.target(0) : x(0);
  guarded(out, "dual_limit", [&] { return dual_limit_check(*m, x(0), z, sc, span); });
  guarded(out, "density_sup", [&] { return density_sup_check(*m, z, sc, span); });
  if (m->homogeneous)
    guarded(out, "bounded_potential",
            [&] { return bounded_potential_check(*m, z, z + sc, z + 2.0 * sc); });
}

void suite_bridge(const ScenarioConfig& cfg, unsigned threads,
                  std::vector<VerificationReport>& out) {
  if (cfg.conditioning == ConditioningKind::none)
    throw ConfigError("conditioning: the bridge suite needs strong, weak or indicator conditioning");
  ModelPtr m = build_model(cfg);
  HFunction h = build_h(cfg, m);
  const double s = cfg.start_time, span = cfg.horizon - s;
  const std::vector<double> times{s + 0.25 * span, s + 0.5 * span, s + 0.75 * span};
  std::optional<PathEnsemble> ens;
  guarded(out, "bridge_simulation", [&] {
    VerificationReport r;
    r.name = "bridge_simulation";
    auto bp = BridgeProcess::make(m, h, s, cfg.start);
    TimeGrid grid = build_grid(cfg, times);
    EnsembleOptions eo;
    eo.threads = threads;
    eo.stride = grid.nodes.size();
    eo.record_times = times;
    eo.scheme = cfg.scheme;
    ens = simulate_ensemble(bp, grid, cfg.n_paths, cfg.master_seed, eo);
    r.n = cfg.n_paths;
    r.seed = cfg.master_seed;
    r.statistics = {{"h_floor_events", ens->counters.h_floor_events},
                    {"failed_paths", ens->counters.failed_paths},
                    {"drift_caps", ens->counters.drift_caps},
                    {"domain_projections", ens->counters.domain_projections}};
    r.pass = ens->counters.failed_paths == 0;
    return r;
  });
  if (!ens) return;
  if (m->dim() == 1) {
    for (double t : times)
      guarded(out, "transition_law", [&] { return transition_law_check(*ens, h, t); });
  }
  if (cfg.conditioning == ConditioningKind::strong) {
    guarded(out, "bridge_hit", [&] { return bridge_hit_check(*ens, cfg.target, 0.05); });
  } else if (m->dim() == 1) {
    guarded(out, "terminal_law", [&] { return terminal_law_check(*ens, h); });
  }
}

TestFunction bump(double centre, double radius) {
  auto u_of = [=](const Vector& x) { return (x(0) - centre) / radius; };
  TestFunction f;
  f.value = [=](double, const Vector& x) {
    double u = u_of(x);
    return std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0;
  };
  f.grad = [=](double, const Vector& x) {
    double u = u_of(x);
    Vector g = Vector::Zero(1);
    if (std::abs(u) < 1.0) {
      double w = 1.0 - u * u;
      g(0) = -2.0 * u / (w * w) * std::exp(-1.0 / w) / radius;
    }
    return g;
  };
  f.hess = [=](double, const Vector& x) {
    double u = u_of(x);
    Matrix H = Matrix::Zero(1, 1);
    if (std::abs(u) < 1.0) {
      double w = 1.0 - u * u;
      double g1 = -2.0 * u / (w * w);
      double g2 = -2.0 * (1.0 + 3.0 * u * u) / (w * w * w);
      H(0, 0) = (g2 + g1 * g1) * std::exp(-1.0 / w) / (radius * radius);
    }
    return H;
  };
  return f;
}

void suite_martingale(const ScenarioConfig& cfg, unsigned threads,
                      std::vector<VerificationReport>& out) {
  ModelPtr m = build_model(cfg);
  HFunction h = build_h(cfg, m);
  const double s = cfg.start_time, span = cfg.horizon - s;
  const std::vector<double> ts{s + 0.25 * span, s + 0.5 * span, s + 0.9 * span};
  guarded(out, "martingale", [&] {
    MartingaleOptions mo;
    mo.n_paths = cfg.n_paths;
    mo.seed = cfg.master_seed;
    mo.threads = threads;
    return martingale_check(h, s, cfg.start, ts, mo);
  });
  if (m->dim() != 1) return;
  guarded(out, "local_martingale_residual", [&] {
    TimeGrid grid = TimeGrid::closed(s, cfg.horizon, 200);
    EnsembleOptions eo;
    eo.threads = threads;
    PathEnsemble ens = simulate_unconditioned(m, s, cfg.start, grid, cfg.n_paths,
                                              derive_seed(cfg.master_seed, 0, 7), eo);
    return local_martingale_residual(*m, bump(cfg.start(0), 2.0 * kernel_spread(cfg, m)), ens,
                                     cfg.horizon);
  });
}

void suite_laplace(std::vector<VerificationReport>& out) {
  guarded(out, "laplace_limit", [] {
    return laplace_limit_check([](double, double s) { return s; }, LaplaceMode::a_i);
  });
  guarded(out, "laplace_limit", [] {
    return laplace_limit_check([](double, double) { return 1.0; }, LaplaceMode::a_i);
  });
  guarded(out, "laplace_limit", [] {
    return laplace_limit_check([](double, double s) { return s; }, LaplaceMode::a_ii);
  });
  guarded(out, "laplace_limit", [] {
    return laplace_limit_check([](double t, double s) { return std::min(1.0, s / t); },
                               LaplaceMode::b);
  });
}

}  // namespace

ScenarioConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  ScenarioConfig cfg;

  if (doc.contains("horizon")) cfg.horizon = number(doc.at("horizon"), "horizon");
  if (doc.contains("start")) {
    const json& st = object_at(doc, "start");
    cfg.start_time = number_or(st, "s", 0.0, "start");
    if (st.contains("x")) cfg.start = vector_of(st.at("x"), "start.x");
  }
  if (!(cfg.start_time < cfg.horizon)) fail("start.s", "must precede the horizon");

  const json& model = object_at(doc, "model");
  const std::string name = string_at(model, "name", "model");
  try {
    cfg.model = parse_builtin_model(name);
  } catch (const ParamError&) {
    fail("model.name", "unknown model '" + name + "'");
  }
  const json params = model.contains("params") ? model.at("params") : json::object();
  if (!params.is_object()) fail("model.params", "expected an object");
  cfg.params = parse_params(cfg.model, params, cfg.horizon);
  const int d = params_dim(cfg.params);
  if (cfg.start.size() == 0) {
    cfg.start = Vector::Zero(d);
    if (cfg.model == BuiltinModel::bessel || cfg.model == BuiltinModel::geometric_bm)
      cfg.start(0) = 1.0;
  }
  if (cfg.start.size() != d) fail("start.x", "dimension does not match the model");

  if (doc.contains("conditioning")) {
    const json& c = object_at(doc, "conditioning");
    const std::string type = string_at(c, "type", "conditioning");
    if (type == "none") {
      cfg.conditioning = ConditioningKind::none;
    } else if (type == "strong") {
      cfg.conditioning = ConditioningKind::strong;
      if (!c.contains("z")) fail("conditioning.z", "missing");
      cfg.target = vector_of(c.at("z"), "conditioning.z");
      if (cfg.target.size() != d) fail("conditioning.z", "dimension does not match the model");
    } else if (type == "indicator") {
      cfg.conditioning = ConditioningKind::indicator;
      if (!c.contains("lo") || !c.contains("hi")) fail("conditioning", "indicator needs lo and hi");
      cfg.region.lo = vector_of(c.at("lo"), "conditioning.lo", -kInf, true);
      cfg.region.hi = vector_of(c.at("hi"), "conditioning.hi", kInf, true);
      if (cfg.region.lo.size() != d || cfg.region.hi.size() != d)
        fail("conditioning", "region dimension does not match the model");
      if (!(cfg.region.lo.array() < cfg.region.hi.array()).all())
        fail("conditioning", "region needs lo < hi");
    } else if (type == "weak") {
      cfg.conditioning = ConditioningKind::weak;
      if (d != 1) fail("conditioning", "weak conditioning is supported for 1-D models");
      const json& H = c.contains("H") ? c.at("H") : json();
      if (!H.is_object()) fail("conditioning.H", "expected an object");
      const std::string kind = string_at(H, "kind", "conditioning.H");
      if (kind == "gaussian") {
        cfg.weak = {WeakSpec::Kind::gaussian, number_or(H, "mean", 0.0, "conditioning.H"),
                    number_or(H, "sd", 1.0, "conditioning.H")};
        if (!(cfg.weak.b > 0.0)) fail("conditioning.H.sd", "must be positive");
      } else if (kind == "uniform") {
        cfg.weak = {WeakSpec::Kind::uniform, number_or(H, "lo", 0.0, "conditioning.H"),
                    number_or(H, "hi", 1.0, "conditioning.H")};
        if (!(cfg.weak.a < cfg.weak.b)) fail("conditioning.H", "needs lo < hi");
      } else {
        fail("conditioning.H.kind", "unknown kind '" + kind + "'");
      }
    } else {
      fail("conditioning.type", "unknown type '" + type + "'");
    }
  } else {
    cfg.conditioning = ConditioningKind::strong;
    cfg.target = cfg.start;
  }

  if (doc.contains("grid")) {
    const json& g = object_at(doc, "grid");
    if (g.contains("refinement")) {
      std::string r = string_at(g, "refinement", "grid");
      if (r == "geometric") cfg.grid.refinement = TimeGrid::Refinement::geometric;
      else if (r == "uniform") cfg.grid.refinement = TimeGrid::Refinement::uniform;
      else fail("grid.refinement", "expected 'geometric' or 'uniform'");
    }
    if (g.contains("N")) {
      if (!g.at("N").is_number_integer() || g.at("N").get<long>() < 1)
        fail("grid.N", "expected a positive integer");
      cfg.grid.steps = g.at("N").get<int>();
    }
    cfg.grid.gamma = number_or(g, "gamma", cfg.grid.gamma, "grid");
    if (g.contains("delta_min")) cfg.grid.delta_min = number(g.at("delta_min"), "grid.delta_min");
  }
  if (doc.contains("ensemble")) {
    const json& e = object_at(doc, "ensemble");
    if (e.contains("n_paths")) {
      if (!e.at("n_paths").is_number_integer() || e.at("n_paths").get<long long>() < 1)
        fail("ensemble.n_paths", "expected a positive integer");
      cfg.n_paths = e.at("n_paths").get<std::size_t>();
    }
    if (e.contains("master_seed")) {
      if (!e.at("master_seed").is_number_integer()) fail("ensemble.master_seed", "expected an integer");
      cfg.master_seed = e.at("master_seed").get<std::uint64_t>();
    }
    if (e.contains("scheme")) {
      std::string sch = string_at(e, "scheme", "ensemble");
      if (sch == "euler") cfg.scheme = Scheme::euler;
      else if (sch == "exact") cfg.scheme = Scheme::exact;
      else fail("ensemble.scheme", "expected 'euler' or 'exact'");
    }
  }
  if (doc.contains("outputs")) {
    const json& o = object_at(doc, "outputs");
    auto flag = [&](const char* key, bool& dst) {
      if (!o.contains(key)) return;
      if (!o.at(key).is_boolean()) fail(std::string("outputs.") + key, "expected a boolean");
      dst = o.at(key).get<bool>();
    };
    flag("paths", cfg.write_paths);
    flag("reports", cfg.write_reports);
    if (o.contains("stride")) {
      if (!o.at("stride").is_number_integer() || o.at("stride").get<long>() < 1)
        fail("outputs.stride", "expected a positive integer");
      cfg.stride = o.at("stride").get<std::size_t>();
    }
    if (o.contains("directory")) cfg.out_dir = string_at(o, "directory", "outputs");
  }

  // Semantic checks need the model itself.
  try {
    ModelPtr m = build_model(cfg);
    if (!m->spec.domain.interior(cfg.start)) fail("start.x", "outside the model's domain");
    if (cfg.conditioning == ConditioningKind::strong && !m->spec.domain.interior(cfg.target))
      fail("conditioning.z", "outside the model's domain");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    fail("model", e.what());
  }
  if (cfg.grid.delta_min && !(*cfg.grid.delta_min > 0.0 &&
                              *cfg.grid.delta_min < cfg.horizon - cfg.start_time))
    fail("grid.delta_min", "must lie in (0, T* - s)");
  if (!(cfg.grid.gamma >= 1.0)) fail("grid.gamma", "must be >= 1");
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(doc);
}

ScenarioConfig default_config() {
  return parse_config(json{{"model", {{"name", "brownian"}}},
                           {"conditioning", {{"type", "strong"}, {"z", 0.0}}},
                           {"start", {{"s", 0.0}, {"x", 0.0}}},
                           {"horizon", 1.0}});
}

ModelPtr build_model(const ScenarioConfig& cfg) { return builtin_model(cfg.model, cfg.params); }

HFunction build_h(const ScenarioConfig& cfg, const ModelPtr& model) {
  switch (cfg.conditioning) {
    case ConditioningKind::none:
      return HFunction::one(model);
    case ConditioningKind::strong:
      return HFunction::strong(model, cfg.horizon, cfg.target);
    case ConditioningKind::indicator:
      return HFunction::indicator(model, cfg.horizon, cfg.region);
    case ConditioningKind::weak: {
      WeakConditioning w;
      const WeakSpec ws = cfg.weak;
      if (ws.kind == WeakSpec::Kind::gaussian) {
        w.density = [ws](const Vector& y) {
          double u = (y(0) - ws.a) / ws.b;
          return std::exp(-0.5 * u * u) / (ws.b * std::sqrt(2.0 * M_PI));
        };
        w.support = Region::interval(ws.a - 8.0 * ws.b, ws.a + 8.0 * ws.b);
      } else {
        w.density = [ws](const Vector& y) {
          return y(0) >= ws.a && y(0) <= ws.b ? 1.0 / (ws.b - ws.a) : 0.0;
        };
        w.support = Region::interval(ws.a, ws.b);
      }
      return HFunction::weak(model, cfg.horizon, std::move(w));
    }
  }
  throw ConfigError("conditioning: unsupported");
}

TimeGrid build_grid(const ScenarioConfig& cfg, std::span<const double> required) {
  const double s = cfg.start_time, T = cfg.horizon;
  if (cfg.conditioning == ConditioningKind::none)
    return TimeGrid::closed(s, T, cfg.grid.steps, required);
  const double dmin = cfg.grid.delta_min.value_or(1e-4 * (T - s));
  if (cfg.grid.refinement == TimeGrid::Refinement::uniform)
    return TimeGrid::uniform(s, T, cfg.grid.steps, dmin, required);
  return TimeGrid::geometric(s, T, cfg.grid.steps, cfg.grid.gamma, dmin, required);
}

bool is_suite(std::string_view suite) {
  return suite == "assumptions" || suite == "bridge" || suite == "martingale" ||
         suite == "appendixB" || suite == "all";
}

std::vector<VerificationReport> run_suite(const ScenarioConfig& cfg, std::string_view suite,
                                          unsigned threads) {
  if (!is_suite(suite)) throw ConfigError("suite: unknown suite '" + std::string(suite) + "'");
  std::vector<VerificationReport> out;
  const bool all = suite == "all";
  if (all || suite == "assumptions") suite_assumptions(cfg, out);
  if (suite == "bridge" || (all && cfg.conditioning != ConditioningKind::none))
    suite_bridge(cfg, threads, out);
  if (all || suite == "martingale") suite_martingale(cfg, threads, out);
  if (all || suite == "appendixB") suite_laplace(out);
  return out;
}

}  // namespace bridgesim
