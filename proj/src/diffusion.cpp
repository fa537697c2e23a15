#include "bridgesim/diffusion.hpp"

#include <cmath>
#include <limits>

#include "bridgesim/errors.hpp"

namespace bridgesim {

DomainBox DomainBox::whole(int dim) {
  return {Vector::Constant(dim, -std::numeric_limits<double>::infinity())};
}

DomainBox DomainBox::half_line(double lower) { return {scalar_state(lower)}; }

bool DomainBox::contains(const Vector& x) const {
  if (x.size() != lower.size()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!(x(i) >= lower(i))) return false;
  return true;
}

bool DomainBox::interior(const Vector& x) const {
  if (x.size() != lower.size()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::isnan(x(i))) return false;
    if (std::isfinite(lower(i)) && !(x(i) > lower(i))) return false;
  }
  return true;
}

bool DomainBox::project_interior(Vector& x, double eps) const {
  bool moved = false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::isfinite(lower(i)) && !(x(i) > lower(i))) {
      x(i) = lower(i) + eps;
      moved = true;
    }
  }
  return moved;
}

Matrix a_matrix(const DiffusionSpec& spec, double t, const Vector& x) {
  if (!spec.domain.contains(x)) throw DomainError("a_matrix: state outside the domain");
  return diffusion_matrix(spec.dispersion(t, x));
}

double ReferenceMeasure::log_weight_at(const Vector& y) const {
  if (kind == Kind::lebesgue) return 0.0;
  return log_weight(y(0));
}

namespace {

void check_times(double s, double t) {
  if (!(t > s)) throw TimeError("transition density needs t > s");
}

}  // namespace

double transition_log_density(const DensityModel& model, double s, double t, const Vector& x,
                              const Vector& y) {
  check_times(s, t);
  return model.log_density(s, t, x, y);
}

double transition_density(const DensityModel& model, double s, double t, const Vector& x,
                          const Vector& y) {
  return std::exp(transition_log_density(model, s, t, x, y));
}

Vector transition_grad_log(const DensityModel& model, double s, double t, const Vector& x,
                           const Vector& y) {
  check_times(s, t);
  if (model.grad_log_x) return model.grad_log_x(s, t, x, y);
  return fd_gradient([&](const Vector& xx) { return model.log_density(s, t, xx, y); }, x);
}

double eval_density(const DensityModel& model, double t, const Vector& x, const Vector& y) {
  return transition_density(model, 0.0, t, x, y);
}

double eval_log_density(const DensityModel& model, double t, const Vector& x, const Vector& y) {
  return transition_log_density(model, 0.0, t, x, y);
}

Vector eval_grad_log(const DensityModel& model, double t, const Vector& x, const Vector& y) {
  return transition_grad_log(model, 0.0, t, x, y);
}

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = fd_step(x(i));
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

Matrix fd_hessian(const std::function<double(const Vector&)>& f, const Vector& x) {
  const auto d = x.size();
  Matrix hess(d, d);
  Vector xp = x;
  const double f0 = f(x);
  // Second differences need a larger step than gradients to stay above round-off.
  auto step = [](double v) { return 1e-4 * std::max(1.0, std::abs(v)); };
  for (Eigen::Index i = 0; i < d; ++i) {
    const double hi = step(x(i));
    xp(i) = x(i) + hi;
    const double fp = f(xp);
    xp(i) = x(i) - hi;
    const double fm = f(xp);
    xp(i) = x(i);
    hess(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double hj = step(x(j));
      auto at = [&](double si, double sj) {
        Vector v = x;
        v(i) += si * hi;
        v(j) += sj * hj;
        return f(v);
      };
      const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hi * hj);
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

}  // namespace bridgesim
