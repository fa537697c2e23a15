#pragma once

#include <functional>
#include <map>
#include <memory>
#include <shared_mutex>
#include <utility>

#include <Eigen/Dense>

#include "bridgesim/diffusion.hpp"

namespace bridgesim {

/// dX = sigma(t) dB + (b(t) + gamma(t) X) dt on [0, horizon].
struct LinearSDE {
  int dim = 1;
  std::function<Matrix(double)> sigma;
  std::function<Vector(double)> b;
  std::function<Matrix(double)> gamma;
  double horizon = 1.0;

  static LinearSDE constant(Matrix sigma, Vector b, Matrix gamma, double horizon);
};

/// Smallest eigenvalue of a(t) = sigma sigma^T over `probes` equispaced times in
/// [0, horizon]; the uniform-ellipticity constant as far as the probe can see.
double ellipticity_constant(const LinearSDE& sde, int probes = 101);

struct OdeOptions {
  double rel_tol = 1e-12;
  double abs_tol = 1e-14;
};

struct FundamentalMatrix {
  Matrix F;
  Matrix F_inv;
};

/// Conditional moments of X_t given X_s = x: mean = jacobian x + shift.
struct MeanCov {
  Matrix jacobian;  // F(t) F^-1(s)
  Vector shift;     // F(t) int_s^t F^-1(u) b(u) du
  Matrix cov;       // Sigma(s, t)
  Vector mean(const Vector& x) const { return jacobian * x + shift; }
};

/// Solves dF^-1/dt = -F^-1 gamma with F^-1(0) = I by adaptive Dormand-Prince,
/// carrying int F^-1 b and int (F^-1 sigma)(F^-1 sigma)^T on the same steps.
/// Immutable after construction except for an internally locked memo of
/// (s, t) moment pairs.
class FundamentalSolution {
 public:
  explicit FundamentalSolution(LinearSDE sde, OdeOptions opts = {});

  const LinearSDE& sde() const { return sde_; }
  double horizon() const { return sde_.horizon; }
  int dim() const { return sde_.dim; }

  FundamentalMatrix at(double t) const;
  MeanCov moments(double s, double t) const;

 private:
  using State = Eigen::VectorXd;
  State advance(double from, double to, State y) const;
  State rhs(double t, const State& y) const;
  State inverse_at(double t) const;

  LinearSDE sde_;
  OdeOptions opts_;
  std::vector<double> checkpoint_times_;
  std::vector<State> checkpoints_;  // F^-1 only, flattened column-major
  mutable std::shared_mutex memo_mutex_;
  mutable std::map<std::pair<double, double>, MeanCov> memo_;
};

FundamentalMatrix fundamental_matrix(const FundamentalSolution& sol, double t);

/// Transition density model of the linear SDE (time-inhomogeneous, Lebesgue).
/// Throws SingularCovError when Sigma(s, t) is singular.
ModelPtr gaussian_density_model(std::shared_ptr<const FundamentalSolution> sol);

/// b(s) + gamma(s) x + a(s) (F(T)F^-1(s))^T Sigma^-1(s, T) (z - m(s, T, x)).
Vector gaussian_bridge_drift(const FundamentalSolution& sol, double s, const Vector& x,
                             const Vector& z);

/// Cholesky of a covariance, with jitter 1e-12 trace/d when it is near singular.
Eigen::LLT<Matrix> factor_covariance(const Matrix& cov);

}  // namespace bridgesim
