#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "bridgesim/types.hpp"

namespace bridgesim {

/// Product domain  prod_i [l_i, inf)  with l_i = -inf meaning the whole line.
struct DomainBox {
  Vector lower;

  static DomainBox whole(int dim);
  static DomainBox half_line(double lower);

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vector& x) const;
  bool interior(const Vector& x) const;
  /// Moves coordinates that sit on or below a finite lower bound to l_i + eps.
  /// Returns true when anything moved.
  bool project_interior(Vector& x, double eps) const;
};

using DriftField = std::function<Vector(double t, const Vector& x)>;
using DispersionField = std::function<Matrix(double t, const Vector& x)>;

struct DiffusionSpec {
  int dim = 1;
  DriftField drift;
  DispersionField dispersion;
  DomainBox domain;
};

/// a = sigma sigma^T for a dispersion matrix (or expression).
template <typename Derived>
auto diffusion_matrix(const Eigen::MatrixBase<Derived>& sigma) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> a = sigma * sigma.transpose();
  return MatrixX<Scalar>(0.5 * (a + a.transpose()));
}

/// a(t, x) = sigma sigma^T (t, x). Throws DomainError outside the domain.
Matrix a_matrix(const DiffusionSpec& spec, double t, const Vector& x);

/// Reference measure m of a transition density. Lebesgue, or weighted by a
/// positive 1-D density (speed measures).
struct ReferenceMeasure {
  enum class Kind { lebesgue, weighted };
  Kind kind = Kind::lebesgue;
  std::function<double(double)> log_weight;

  static ReferenceMeasure lebesgue() { return {}; }
  static ReferenceMeasure weighted(std::function<double(double)> log_weight) {
    return {Kind::weighted, std::move(log_weight)};
  }
  /// log of dm/dLebesgue at y.
  double log_weight_at(const Vector& y) const;
};

/// Conditional law of X_t given X_s = x when it is Gaussian: mean, covariance,
/// and the Jacobian of the mean in x.
struct GaussianMoments {
  Vector mean;
  Matrix cov;
  Matrix mean_jacobian;
};

/// Transition density p(s, t, x, y) of X_t given X_s = x, relative to `measure`.
/// Homogeneous models ignore s beyond the elapsed time t - s.
struct DensityModel {
  std::string name;
  DiffusionSpec spec;
  ReferenceMeasure measure;
  bool homogeneous = true;

  std::function<double(double s, double t, const Vector& x, const Vector& y)> log_density;
  /// Optional analytic gradient in x of log p.
  std::function<Vector(double s, double t, const Vector& x, const Vector& y)> grad_log_x;
  /// Optional: present when the transition law is Gaussian.
  std::function<GaussianMoments(double s, double t, const Vector& x)> moments;
  /// Optional exact sampler: maps a standard normal vector to a draw of X_t | X_s = x.
  std::function<Vector(double s, double t, const Vector& x, const Vector& normal)> sample;

  int dim() const { return spec.dim; }
};

using ModelPtr = std::shared_ptr<const DensityModel>;

/// Densities over elapsed time t from time 0; throws TimeError for t <= 0.
double eval_density(const DensityModel& model, double t, const Vector& x, const Vector& y);
double eval_log_density(const DensityModel& model, double t, const Vector& x, const Vector& y);
Vector eval_grad_log(const DensityModel& model, double t, const Vector& x, const Vector& y);

/// Same, for the transition from time s to time t.
double transition_density(const DensityModel& model, double s, double t, const Vector& x,
                          const Vector& y);
double transition_log_density(const DensityModel& model, double s, double t, const Vector& x,
                              const Vector& y);
Vector transition_grad_log(const DensityModel& model, double s, double t, const Vector& x,
                           const Vector& y);

/// Central finite-difference gradient with step 1e-5 * max(1, |x_i|).
Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x);

/// Central finite differences with the same step rule; returns the Hessian.
Matrix fd_hessian(const std::function<double(const Vector&)>& f, const Vector& x);

inline double fd_step(double x) { return 1e-5 * std::max(1.0, std::abs(x)); }

}  // namespace bridgesim
