#include "bridgesim/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "bridgesim/errors.hpp"
#include "bridgesim/quadrature.hpp"
#include "bridgesim/rng.hpp"

namespace bridgesim {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_interval(double s, double horizon, int steps) {
  if (!(s < horizon)) throw TimeError("grid start must precede the horizon");
  if (steps < 1) throw ParamError("grid needs at least one step");
}

void merge_required(std::vector<double>& nodes, std::span<const double> required) {
  const double lo = nodes.front(), hi = nodes.back();
  const double tol = 1e-12 * std::max(1.0, std::abs(hi - lo));
  for (double t : required) {
    if (t < lo - tol || t > hi + tol) continue;
    auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
    bool near = (it != nodes.end() && std::abs(*it - t) <= tol) ||
                (it != nodes.begin() && std::abs(*(it - 1) - t) <= tol);
    if (!near) nodes.insert(it, t);
  }
}

struct Recorder {
  std::span<const std::size_t> idx;
  Eigen::MatrixXd* states;
  std::size_t next = 0;

  void record(std::size_t k, const Vector& x) {
    while (next < idx.size() && idx[next] == k) states->col(next++) = x;
  }
  void fail() {
    while (next < idx.size()) states->col(next++).setConstant(kNaN);
  }
};

std::vector<std::size_t> all_nodes(const TimeGrid& grid) {
  std::vector<std::size_t> v(grid.nodes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
  return v;
}

// Bounds of the terminal law's support in 1-D.
std::pair<double, double> terminal_bounds(const BridgeProcess& bp) {
  double lower = bp.spec().domain.lower(0), upper = kInf;
  if (bp.h.kind() == HFunction::Kind::indicator && bp.h.region()) {
    lower = std::max(lower, bp.h.region()->lo(0));
    upper = std::min(upper, bp.h.region()->hi(0));
  }
  return {lower, upper};
}

std::optional<Vector> sample_terminal(const BridgeProcess& bp, double t, const Vector& x,
                                      Engine& eng) {
  switch (bp.h.kind()) {
    case HFunction::Kind::strong:
      return *bp.h.target();
    case HFunction::Kind::explicit_h:
      return std::nullopt;
    default:
      break;
  }
  if (bp.spec().dim != 1) return std::nullopt;
  const double T = bp.horizon();
  const auto& model = *bp.model;
  auto log_f = [&](double y) {
    Vector v = scalar_state(y);
    double lt = bp.h.log_terminal(v);
    if (!std::isfinite(lt)) return -kInf;
    return lt + transition_log_density(model, t, T, x, v) + model.measure.log_weight_at(v);
  };
  auto [lower, upper] = terminal_bounds(bp);
  double a = a_matrix(bp.spec(), t, x)(0, 0);
  double spread = std::sqrt(std::max(a, 1e-300) * (T - t));
  return scalar_state(sample_inverse_cdf(log_f, x(0), spread, lower, upper, open_uniform(eng)));
}

Path euler_impl(const BridgeProcess& bp, const TimeGrid& grid, std::uint64_t seed,
                std::span<const std::size_t> recorded, const EulerOptions& opts) {
  const auto& spec = bp.spec();
  const int d = spec.dim;
  Path path;
  path.seed = seed;
  path.states.resize(d, static_cast<Eigen::Index>(recorded.size()));
  Recorder rec{recorded, &path.states};
  Engine eng(seed);
  std::normal_distribution<double> n01;
  const bool trivial_h = bp.h.kind() == HFunction::Kind::explicit_h &&
                         !std::isfinite(bp.h.horizon());

  Vector x = bp.start;
  rec.record(0, x);
  for (std::size_t k = 0; k + 1 < grid.nodes.size(); ++k) {
    const double t = grid.nodes[k];
    const double dt = grid.nodes[k + 1] - t;
    Vector drift = spec.drift(t, x);
    Matrix sigma = spec.dispersion(t, x);
    Matrix a = diffusion_matrix(sigma);
    if (!trivial_h) {
      HValue hv;
      try {
        hv = bp.h.evaluate(t, x);
      } catch (const HFloorError&) {
        ++path.diagnostics.h_floor_events;
        path.diagnostics.failed = true;
        rec.fail();
        return path;
      }
      drift += a * hv.grad_log;
    }
    if (!drift.allFinite()) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "non-finite bridge drift at t=%.17g, x_1=%.17g (step %zu)", t,
                    x(0), k);
      throw NumericsError(buf);
    }
    Vector disp = drift * dt;
    const double sdt = std::sqrt(dt);
    for (int i = 0; i < d; ++i) {
      if (!(a(i, i) > 0.0)) continue;
      const double cap = opts.cap_factor * std::sqrt(a(i, i)) * sdt;
      if (std::abs(disp(i)) > cap) {
        disp(i) = std::copysign(cap, disp(i));
        ++path.diagnostics.drift_caps;
      }
    }
    Vector xi = standard_normal(eng, n01, d);
    x += disp + sigma * xi * sdt;
    if (!spec.domain.interior(x) && spec.domain.project_interior(x, opts.domain_eps))
      ++path.diagnostics.domain_projections;
    rec.record(k + 1, x);
  }
  if (opts.terminal && grid.refinement != TimeGrid::Refinement::closed)
    path.terminal = sample_terminal(bp, grid.nodes.back(), x, eng);
  return path;
}

Path exact_impl(const BridgeProcess& bp, const TimeGrid& grid, std::uint64_t seed,
                std::span<const std::size_t> recorded) {
  const auto& spec = bp.spec();
  if (spec.dim != 1) throw ParamError("exact Markov bridge sampling is 1-D only");
  const auto& model = *bp.model;
  Path path;
  path.seed = seed;
  path.states.resize(1, static_cast<Eigen::Index>(recorded.size()));
  Recorder rec{recorded, &path.states};
  Engine eng(seed);
  const double lower = spec.domain.lower(0);
  const bool trivial_h = bp.h.kind() == HFunction::Kind::explicit_h &&
                         !std::isfinite(bp.h.horizon());

  Vector x = bp.start;
  rec.record(0, x);
  for (std::size_t k = 0; k + 1 < grid.nodes.size(); ++k) {
    const double t = grid.nodes[k], t1 = grid.nodes[k + 1];
    auto log_f = [&](double y) {
      Vector v = scalar_state(y);
      if (!spec.domain.interior(v)) return -kInf;
      double lp = transition_log_density(model, t, t1, x, v) + model.measure.log_weight_at(v);
      if (trivial_h || !std::isfinite(lp)) return lp;
      try {
        return lp + bp.h.log_value(t1, v);
      } catch (const HFloorError&) {
        return -kInf;
      }
    };
    double centre = x(0);
    try {
      centre += bridge_drift(bp, t, x)(0) * (t1 - t);
    } catch (const Error&) {
    }
    double a = a_matrix(spec, t, x)(0, 0);
    double spread = std::sqrt(std::max(a, 1e-300) * (t1 - t));
    x(0) = sample_inverse_cdf(log_f, centre, spread, lower, kInf, open_uniform(eng));
    rec.record(k + 1, x);
  }
  if (grid.refinement != TimeGrid::Refinement::closed)
    path.terminal = sample_terminal(bp, grid.nodes.back(), x, eng);
  return path;
}

Path exact_unconditioned(const DensityModel& model, const TimeGrid& grid, const Vector& x0,
                         std::uint64_t seed, std::span<const std::size_t> recorded) {
  Path path;
  path.seed = seed;
  path.states.resize(model.dim(), static_cast<Eigen::Index>(recorded.size()));
  Recorder rec{recorded, &path.states};
  Engine eng(seed);
  std::normal_distribution<double> n01;
  Vector x = x0;
  rec.record(0, x);
  for (std::size_t k = 0; k + 1 < grid.nodes.size(); ++k) {
    x = model.sample(grid.nodes[k], grid.nodes[k + 1], x, standard_normal(eng, n01, model.dim()));
    rec.record(k + 1, x);
  }
  return path;
}

unsigned resolve_threads(unsigned requested, std::size_t n) {
  unsigned t = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<unsigned>(std::min<std::size_t>(t, std::max<std::size_t>(n, 1)));
}

PathEnsemble run_ensemble(const TimeGrid& grid, int dim, std::size_t n, std::uint64_t master,
                          const EnsembleOptions& opts,
                          const std::function<Path(std::uint64_t, std::span<const std::size_t>)>& one) {
  PathEnsemble ens;
  ens.grid = grid;
  ens.dim = dim;
  ens.master_seed = master;
  ens.recorded = record_plan(grid, opts.stride, opts.record_times);
  ens.paths.resize(n);
  const int attempts = std::max(1, opts.max_attempts);

  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&](unsigned id, unsigned nthreads) {
    try {
      for (std::size_t i = id; i < n; i += nthreads) {
        Path p;
        int a = 0;
        int floor_events = 0;
        for (; a < attempts; ++a) {
          p = one(derive_seed(master, i, static_cast<std::uint64_t>(a)), ens.recorded);
          floor_events += p.diagnostics.h_floor_events;
          if (!p.diagnostics.failed) break;
        }
        p.diagnostics.attempts = std::min(a + 1, attempts);
        p.diagnostics.h_floor_events = floor_events;
        ens.paths[i] = std::move(p);
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  const unsigned nthreads = resolve_threads(opts.threads, n);
  if (nthreads == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < nthreads; ++j) pool.emplace_back(worker, j, nthreads);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  for (const auto& p : ens.paths) {
    ens.counters.h_floor_events += p.diagnostics.h_floor_events;
    ens.counters.domain_projections += p.diagnostics.domain_projections;
    ens.counters.drift_caps += p.diagnostics.drift_caps;
    if (p.diagnostics.attempts > 1) ++ens.counters.resampled_paths;
    if (p.diagnostics.failed) ++ens.counters.failed_paths;
  }
  if (n > 0 && static_cast<double>(ens.counters.failed_paths) >
                   opts.max_failure_rate * static_cast<double>(n)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%ld of %zu paths failed after %d attempts",
                  ens.counters.failed_paths, n, attempts);
    throw EnsembleError(buf);
  }
  return ens;
}

}  // namespace

TimeGrid TimeGrid::uniform(double s, double horizon, int steps, double delta_min,
                           std::span<const double> required) {
  check_interval(s, horizon, steps);
  if (!(delta_min > 0.0) || delta_min >= horizon - s) throw ParamError("delta_min out of range");
  TimeGrid g;
  g.start = s;
  g.horizon = horizon;
  g.refinement = Refinement::uniform;
  const double end = horizon - delta_min;
  g.nodes.resize(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) g.nodes[k] = s + (end - s) * k / steps;
  g.nodes.back() = end;
  merge_required(g.nodes, required);
  return g;
}

TimeGrid TimeGrid::geometric(double s, double horizon, int steps, double gamma, double delta_min,
                             std::span<const double> required) {
  check_interval(s, horizon, steps);
  if (!(delta_min > 0.0) || delta_min >= horizon - s) throw ParamError("delta_min out of range");
  if (!(gamma >= 1.0)) throw ParamError("grid exponent gamma must be >= 1");
  TimeGrid g;
  g.start = s;
  g.horizon = horizon;
  g.refinement = Refinement::geometric;
  g.gamma = gamma;
  const double span = horizon - s - delta_min;
  g.nodes.resize(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) {
    double frac = 1.0 - static_cast<double>(k) / steps;
    g.nodes[k] = horizon - delta_min - span * std::pow(frac, gamma);
  }
  g.nodes.front() = s;
  g.nodes.back() = horizon - delta_min;
  merge_required(g.nodes, required);
  return g;
}

TimeGrid TimeGrid::standard(double s, double horizon, std::span<const double> required) {
  return geometric(s, horizon, 2000, 2.0, 1e-4 * (horizon - s), required);
}

TimeGrid TimeGrid::closed(double s, double end, int steps, std::span<const double> required) {
  check_interval(s, end, steps);
  TimeGrid g;
  g.start = s;
  g.horizon = end;
  g.refinement = Refinement::closed;
  g.nodes.resize(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) g.nodes[k] = s + (end - s) * k / steps;
  g.nodes.back() = end;
  merge_required(g.nodes, required);
  return g;
}

TimeGrid TimeGrid::single(double s, double horizon) {
  if (!(s < horizon)) throw TimeError("grid start must precede the horizon");
  TimeGrid g;
  g.start = s;
  g.horizon = horizon;
  g.nodes = {s};
  return g;
}

std::size_t TimeGrid::nearest(double t) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
  if (it == nodes.end()) return nodes.size() - 1;
  std::size_t i = static_cast<std::size_t>(it - nodes.begin());
  if (i > 0 && t - nodes[i - 1] < *it - t) --i;
  return i;
}

std::vector<std::size_t> record_plan(const TimeGrid& grid, std::size_t stride,
                                     std::span<const double> times) {
  stride = std::max<std::size_t>(stride, 1);
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < grid.nodes.size(); k += stride) idx.push_back(k);
  idx.push_back(grid.nodes.size() - 1);
  for (double t : times) idx.push_back(grid.nearest(t));
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

Path euler_maruyama(const BridgeProcess& bp, const TimeGrid& grid, std::uint64_t seed,
                    const EulerOptions& opts) {
  auto idx = all_nodes(grid);
  return euler_impl(bp, grid, seed, idx, opts);
}

Path euler_maruyama(const BridgeProcess& bp, const TimeGrid& grid, std::uint64_t seed,
                    std::span<const std::size_t> recorded, const EulerOptions& opts) {
  return euler_impl(bp, grid, seed, recorded, opts);
}

Path exact_brownian_bridge(const Vector& x, const Vector& z, double horizon, const TimeGrid& grid,
                           std::uint64_t seed, double sigma) {
  const int d = static_cast<int>(x.size());
  const double s = grid.start;
  const double L = horizon - s;
  if (!(L > 0.0)) throw TimeError("bridge horizon must follow the start");
  Engine eng(seed);
  std::normal_distribution<double> n01;
  const std::size_t K = grid.nodes.size();
  Eigen::MatrixXd B(d, static_cast<Eigen::Index>(K));
  B.col(0).setZero();
  for (std::size_t k = 1; k < K; ++k) {
    double dt = grid.nodes[k] - grid.nodes[k - 1];
    B.col(k) = B.col(k - 1) + standard_normal(eng, n01, d) * std::sqrt(dt);
  }
  Vector BL = B.col(K - 1);
  const double rest = horizon - grid.nodes.back();
  if (rest > 0.0) BL += standard_normal(eng, n01, d) * std::sqrt(rest);
  Path path;
  path.seed = seed;
  path.states.resize(d, static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    double tau = grid.nodes[k] - s;
    path.states.col(k) = x + sigma * (B.col(k) - (tau / L) * BL) + (z - x) * (tau / L);
  }
  path.terminal = z;
  return path;
}

Path exact_markov_bridge(const BridgeProcess& bp, const TimeGrid& grid, std::uint64_t seed) {
  auto idx = all_nodes(grid);
  return exact_impl(bp, grid, seed, idx);
}

double sample_inverse_cdf(const std::function<double(double)>& log_f, double centre, double spread,
                          double lower, double upper, double u) {
  return TabulatedLaw(log_f, centre, spread, lower, upper, 64).quantile(u);
}

std::vector<double> PathEnsemble::recorded_times() const {
  std::vector<double> t;
  t.reserve(recorded.size());
  for (auto k : recorded) t.push_back(grid.nodes[k]);
  return t;
}

std::size_t PathEnsemble::position_near(double t) const {
  std::size_t best = 0;
  double dist = kInf;
  for (std::size_t p = 0; p < recorded.size(); ++p) {
    double dd = std::abs(grid.nodes[recorded[p]] - t);
    if (dd < dist) {
      dist = dd;
      best = p;
    }
  }
  return best;
}

std::vector<double> PathEnsemble::marginal(std::size_t position, int i) const {
  std::vector<double> v;
  v.reserve(paths.size());
  for (const auto& p : paths)
    if (!p.diagnostics.failed) v.push_back(p.states(i, static_cast<Eigen::Index>(position)));
  return v;
}

std::vector<Vector> PathEnsemble::marginal_states(std::size_t position) const {
  std::vector<Vector> v;
  v.reserve(paths.size());
  for (const auto& p : paths)
    if (!p.diagnostics.failed) v.emplace_back(p.states.col(static_cast<Eigen::Index>(position)));
  return v;
}

std::vector<double> PathEnsemble::terminal(int i) const {
  std::vector<double> v;
  for (const auto& p : paths)
    if (!p.diagnostics.failed && p.terminal) v.push_back((*p.terminal)(i));
  return v;
}

PathEnsemble simulate_ensemble(const BridgeProcess& bp, const TimeGrid& grid, std::size_t n_paths,
                               std::uint64_t master_seed, const EnsembleOptions& opts) {
  if (std::abs(grid.start - bp.start_time) > 1e-12 * std::max(1.0, std::abs(grid.start)))
    throw TimeError("grid start differs from the bridge start time");
  if (grid.nodes.back() >= bp.horizon()) throw TimeError("grid reaches the horizon");
  if (opts.scheme == Scheme::exact) {
    return run_ensemble(grid, bp.spec().dim, n_paths, master_seed, opts,
                        [&](std::uint64_t seed, std::span<const std::size_t> rec) {
                          return exact_impl(bp, grid, seed, rec);
                        });
  }
  return run_ensemble(grid, bp.spec().dim, n_paths, master_seed, opts,
                      [&](std::uint64_t seed, std::span<const std::size_t> rec) {
                        return euler_impl(bp, grid, seed, rec, opts.euler);
                      });
}

PathEnsemble simulate_unconditioned(const ModelPtr& model, double s, const Vector& x,
                                    const TimeGrid& grid, std::size_t n_paths,
                                    std::uint64_t master_seed, const EnsembleOptions& opts,
                                    bool prefer_exact) {
  if (prefer_exact && model->sample) {
    return run_ensemble(grid, model->dim(), n_paths, master_seed, opts,
                        [&](std::uint64_t seed, std::span<const std::size_t> rec) {
                          return exact_unconditioned(*model, grid, x, seed, rec);
                        });
  }
  auto bp = BridgeProcess::make(model, HFunction::one(model), s, x);
  EulerOptions eo = opts.euler;
  eo.terminal = false;
  return run_ensemble(grid, model->dim(), n_paths, master_seed, opts,
                      [&](std::uint64_t seed, std::span<const std::size_t> rec) {
                        return euler_impl(bp, grid, seed, rec, eo);
                      });
}

void write_paths_csv(std::ostream& os, const PathEnsemble& ens, std::size_t stride) {
  stride = std::max<std::size_t>(stride, 1);
  os << "path_id,t";
  for (int i = 1; i <= ens.dim; ++i) os << ",x_" << i;
  os << '\n';
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  const std::size_t K = ens.recorded.size();
  for (std::size_t id = 0; id < ens.paths.size(); ++id) {
    const Path& p = ens.paths[id];
    if (p.diagnostics.failed) continue;
    for (std::size_t q = 0; q < K; ++q) {
      if (q % stride != 0 && q + 1 != K) continue;
      os << id << ',' << num(ens.grid.nodes[ens.recorded[q]]);
      for (int i = 0; i < ens.dim; ++i) os << ',' << num(p.states(i, static_cast<Eigen::Index>(q)));
      os << '\n';
    }
    if (p.terminal) {
      os << id << ',' << num(ens.grid.horizon);
      for (int i = 0; i < ens.dim; ++i) os << ',' << num((*p.terminal)(i));
      os << '\n';
    }
  }
}

}  // namespace bridgesim
