#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgesim/integrator.hpp"
#include "bridgesim/ks.hpp"

namespace bridgesim {

/// Outcome of one check. Everything needed to rerun it sits in `inputs` and `seed`.
struct VerificationReport {
  std::string name;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json statistics = nlohmann::json::object();
  nlohmann::json thresholds = nlohmann::json::object();
  bool pass = false;
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
  double runtime_seconds = 0.0;
  std::vector<std::string> notes;
};

nlohmann::json to_json(const VerificationReport& r);

/// |p(0,t,x,y) - int p(0,t-s,x,u) p(t-s,t,u,y) m(du)| by adaptive quadrature
/// (1-D or 2-D). Passes when the relative residual is below rel_tol.
VerificationReport chapman_kolmogorov_check(const DensityModel& model, double s, double t,
                                            const Vector& x, const Vector& y,
                                            double rel_tol = 1e-6);

/// int over |y - z| >= r of p(u-t, t..)(y, z) p(0, u-t)(x, y) m(dy) for each t in
/// t_sequence (default 2^-k, k = 4..10). Passes when the last three values
/// decrease and the final one is below 1e-4 p(u, x, z). 1-D.
VerificationReport dual_limit_check(const DensityModel& model, double x, double z, double r,
                                    double u, std::vector<double> t_sequence = {});

/// Grid search of sup p(t, x, z) over t in (0, T*] (geometric toward 0) and
/// |x - z| >= r within the box |x - z| <= box. Passes when the sup is finite
/// and moves by less than 1e-3 relative under one grid refinement. 1-D.
VerificationReport density_sup_check(const DensityModel& model, double z, double r, double horizon,
                                     double box = 0.0);

struct PotentialResult {
  double value = 0.0;
  double error = 0.0;
  bool infinite = false;
};

/// u^alpha(x, y) = int_0^inf e^{-alpha t} p(t, x, y) dt, split dyadically at
/// t = 0 and mapped on (1, inf). x = y in d >= 2 is flagged infinite.
PotentialResult potential_density(const DensityModel& model, double alpha, const Vector& x,
                                  const Vector& y, double rel_tol = 1e-10);

/// alpha u^alpha(x, y) over x in [k_lo, k_hi] (n_x points) and `alphas`
/// (default 10^{0, 0.5, ..., 6}). Passes when every value is finite and, for
/// each x, non-increasing over the last three alphas. Throws ParamError when y
/// lies in K.
VerificationReport bounded_potential_check(const DensityModel& model, double y, double k_lo,
                                           double k_hi, std::vector<double> alphas = {},
                                           int n_x = 11);

struct MartingaleOptions {
  std::size_t n_paths = 10000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  /// Tail time for the supermartingale check; default T* - 1e-3 (T* - s).
  std::optional<double> tail_time;
  /// Euler steps when the model has no exact sampler.
  int euler_steps = 1000;
};

/// Sample means of h(t, X_t) / h(s, x) along the unconditioned diffusion for t
/// in t_list, each required in 1 +- 3 SE; the tail mean must stay below 1 + 3 SE.
/// A failure triggers one independent rerun (recorded in notes).
VerificationReport martingale_check(const HFunction& h, double s, const Vector& x,
                                    std::span<const double> t_list,
                                    const MartingaleOptions& opts = {});

/// One-sample KS of the simulated X_{T*} against the reweighted terminal law
/// proportional to H(y) p(s, T*, x, y) m(dy). Weak or indicator h, 1-D. Strong
/// conditioning is refused (ParamError); fewer than 100 samples raise SampleSizeError.
VerificationReport terminal_law_check(const PathEnsemble& ens, const HFunction& h,
                                      double alpha = 0.01);

/// One-sample KS of X_t against the h-transformed kernel
/// p(s, t, x, y) h(t, y) / h(s, x) m(dy), whose CDF is tabulated by quadrature.
VerificationReport transition_law_check(const PathEnsemble& ens, const HFunction& h, double t,
                                        double alpha = 0.01);

/// Fraction of paths with |X_{t_N} - z| < tol at the last grid node; passes at
/// >= 0.99. Failed paths count as misses. Reports HFloorError events.
VerificationReport bridge_hit_check(const PathEnsemble& ens, const Vector& z, double tol = 0.05);

struct TestFunction {
  std::function<double(double, const Vector&)> value;
  std::function<Vector(double, const Vector&)> grad;
  std::function<Matrix(double, const Vector&)> hess;
  /// Time derivative; absent means f does not depend on time.
  std::function<double(double, const Vector&)> dt;
};

/// M^f_t = f(t, X_t) - f(s, X_s) - int_s^t (df/du + A_u f)(u, X_u) du along
/// each path (trapezoid over the recorded nodes, which should be every grid
/// node); passes when the mean is within 3 SE of 0.
VerificationReport local_martingale_residual(const DensityModel& model, const TestFunction& f,
                                             const PathEnsemble& ens, double t);

enum class LaplaceMode { a_i, a_ii, b };

struct LaplaceOptions {
  double t = 1.0;
  double beta = 1.0;
  double bound = 1.0;  // K of part b
  std::vector<double> alphas = {1e1, 1e2, 1e3, 1e4, 1e5, 1e6};
  double zero_tol = 1e-4;
};

/// Large-alpha limits of Laplace transforms of a synthetic phi(t, s).
/// a_i: alpha int_0^t e^{-alpha s} phi(t, s) ds should tend to phi(t, 0+).
/// a_ii: alpha int_0^inf int_0^t e^{-alpha s - beta t} phi ds dt should tend to
/// int_0^inf e^{-beta t} phi(t, 0+) dt. b: if phi <= K on 0 <= delta <= t and
/// phi(t, 0+) = 0, the a_i transform tends to 0 (a vacuous pass otherwise).
/// statistics.values holds the transform at each alpha.
VerificationReport laplace_limit_check(const std::function<double(double, double)>& phi,
                                       LaplaceMode mode, const LaplaceOptions& opts = {});

/// alpha int_0^t e^{-alpha s} phi(s) ds.
double laplace_transform_mean(const std::function<double(double)>& phi, double alpha, double t);

struct PreconditionOptions {
  std::vector<Vector> probe_grid;
  double start_time = 0.0;
  Vector start;
  double horizon = 1.0;
  std::size_t n_paths = 1000;
  int steps = 1000;
  std::uint64_t seed = 7;
  unsigned threads = 0;
};

/// Necessary-condition probe for strong well-posedness: pairwise Lipschitz
/// quotients of b and sigma (and of the bridge drift when h is given) on nested
/// closed sets C_j = {probe points at distance >= 2^-j from the boundary and
/// norm <= 2^j}, plus the Monte Carlo probability that the unconditioned
/// diffusion touches the boundary before T*. Evidence, not a proof.
VerificationReport strong_solution_preconditions(const ModelPtr& model, const HFunction* h,
                                                 const PreconditionOptions& opts);

}  // namespace bridgesim
