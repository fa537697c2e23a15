#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "bridgesim/h_function.hpp"

namespace bridgesim {

/// Simulation grid s = t_0 < ... < t_N. Bridge grids stop at t_N = T* - delta_min;
/// closed grids (unconditioned simulation) end exactly at the horizon.
struct TimeGrid {
  enum class Refinement { uniform, geometric, closed };

  double start = 0.0;
  double horizon = 1.0;
  std::vector<double> nodes;
  Refinement refinement = Refinement::geometric;
  double gamma = 1.0;

  /// Extra `required` times are merged in as nodes.
  static TimeGrid uniform(double s, double horizon, int steps, double delta_min,
                          std::span<const double> required = {});
  /// T* - t_k = delta_min + (T* - s - delta_min) (1 - k/N)^gamma.
  static TimeGrid geometric(double s, double horizon, int steps, double gamma, double delta_min,
                            std::span<const double> required = {});
  /// geometric(gamma = 2), N = 2000, delta_min = 1e-4 (T* - s).
  static TimeGrid standard(double s, double horizon, std::span<const double> required = {});
  /// Uniform grid over [s, end] including `end`.
  static TimeGrid closed(double s, double end, int steps, std::span<const double> required = {});
  /// The degenerate grid {s}.
  static TimeGrid single(double s, double horizon);

  std::size_t steps() const { return nodes.size() - 1; }
  double delta_min() const { return horizon - nodes.back(); }
  /// Index of the node closest to t.
  std::size_t nearest(double t) const;
};

struct PathDiagnostics {
  int h_floor_events = 0;
  int domain_projections = 0;
  int drift_caps = 0;
  int attempts = 1;
  bool failed = false;
};

/// One simulated path: states at the recorded grid nodes (d x K), the terminal
/// state at T* when one is defined, and what happened along the way.
struct Path {
  Eigen::MatrixXd states;
  std::optional<Vector> terminal;
  std::uint64_t seed = 0;
  PathDiagnostics diagnostics;
};

struct EulerOptions {
  double domain_eps = 1e-12;
  /// Per-step drift displacement is capped at cap_factor * sqrt(a_ii dt).
  double cap_factor = 10.0;
  /// Sample the terminal state (pin z, or draw from the weak terminal law).
  bool terminal = true;
};

/// Node indices to keep: every `stride`-th node, the final node, and the nodes
/// nearest to `times`.
std::vector<std::size_t> record_plan(const TimeGrid& grid, std::size_t stride,
                                     std::span<const double> times = {});

/// Euler-Maruyama on the bridge SDE. HFloorError marks the path failed (states
/// after the failure are NaN); non-finite drift raises NumericsError.
Path euler_maruyama(const BridgeProcess& bp, const TimeGrid& grid, std::uint64_t seed,
                    const EulerOptions& opts = {});
Path euler_maruyama(const BridgeProcess& bp, const TimeGrid& grid, std::uint64_t seed,
                    std::span<const std::size_t> recorded, const EulerOptions& opts = {});

/// x + B_t - (t/L) B_L + (z - x) t/L on the grid (L = T* - s), scaled by sigma.
Path exact_brownian_bridge(const Vector& x, const Vector& z, double horizon, const TimeGrid& grid,
                           std::uint64_t seed, double sigma = 1.0);

/// Sequential inverse-CDF sampling from the h-transformed kernel
/// p(t_k, t_{k+1}, x_k, y) h(t_{k+1}, y) / h(t_k, x_k). 1-D models only.
Path exact_markov_bridge(const BridgeProcess& bp, const TimeGrid& grid, std::uint64_t seed);

/// Draws from the density proportional to exp(log_f) on [lower, upper] by
/// inverse CDF, given a rough centre and spread of the mass (a 64-cell
/// TabulatedLaw).
double sample_inverse_cdf(const std::function<double(double)>& log_f, double centre, double spread,
                          double lower, double upper, double u);

enum class Scheme { euler, exact };

struct EnsembleOptions {
  unsigned threads = 0;  // 0: hardware concurrency
  std::size_t stride = 1;
  std::vector<double> record_times;
  int max_attempts = 3;
  double max_failure_rate = 0.01;
  Scheme scheme = Scheme::euler;
  EulerOptions euler;
};

struct EnsembleCounters {
  long h_floor_events = 0;
  long domain_projections = 0;
  long drift_caps = 0;
  long resampled_paths = 0;
  long failed_paths = 0;
};

struct PathEnsemble {
  TimeGrid grid;
  std::vector<std::size_t> recorded;
  std::vector<Path> paths;
  std::uint64_t master_seed = 0;
  int dim = 1;
  EnsembleCounters counters;

  std::vector<double> recorded_times() const;
  /// Position in `recorded` of the node nearest t.
  std::size_t position_near(double t) const;
  /// Component `i` at a recorded position across non-failed paths.
  std::vector<double> marginal(std::size_t position, int i = 0) const;
  std::vector<Vector> marginal_states(std::size_t position) const;
  /// Terminal states (at T*) across non-failed paths.
  std::vector<double> terminal(int i = 0) const;
};

/// n independent paths; path i uses stream derive_seed(master_seed, i, attempt).
/// Bit-identical for a fixed master seed whatever the thread count. Failed
/// paths are resampled on fresh sub-streams up to max_attempts; a final
/// failure rate above max_failure_rate raises EnsembleError.
PathEnsemble simulate_ensemble(const BridgeProcess& bp, const TimeGrid& grid, std::size_t n_paths,
                               std::uint64_t master_seed, const EnsembleOptions& opts = {});

/// Unconditioned paths of the base diffusion from (s, x) on a closed grid;
/// uses the model's exact sampler when it has one, Euler otherwise.
PathEnsemble simulate_unconditioned(const ModelPtr& model, double s, const Vector& x,
                                    const TimeGrid& grid, std::size_t n_paths,
                                    std::uint64_t master_seed, const EnsembleOptions& opts = {},
                                    bool prefer_exact = true);

/// CSV with header `path_id,t,x_1,...,x_d`; one row per recorded node (every
/// `stride`-th position, plus the last), then the terminal row at T* when present.
void write_paths_csv(std::ostream& os, const PathEnsemble& ens, std::size_t stride = 1);

}  // namespace bridgesim
