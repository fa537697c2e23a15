#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "bridgesim/types.hpp"

namespace bridgesim {

using ScalarFunction = std::function<double(double)>;

struct QuadOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  int max_subdivisions = 4000;
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Single 15-point Kronrod rule on a finite interval; `error` is |K15 - G7|.
QuadResult gauss_kronrod15(const ScalarFunction& f, double a, double b);

/// Globally adaptive Gauss-Kronrod quadrature over [a, b]. Either end may be
/// infinite; infinite pieces are mapped onto (0, 1] by x = a + (1 - u) / u.
QuadResult integrate(const ScalarFunction& f, double a, double b, const QuadOptions& opts = {});

/// Same, with the interval pre-split at `points` (sorted, ends may be +-inf).
/// Breakpoints are how callers tell the integrator where narrow mass sits.
QuadResult integrate(const ScalarFunction& f, std::span<const double> points,
                     const QuadOptions& opts = {});

/// Like integrate() but throws QuadratureError on non-convergence or a
/// non-finite result.
double integrate_checked(const ScalarFunction& f, std::span<const double> points,
                         const QuadOptions& opts = {});
double integrate_checked(const ScalarFunction& f, double a, double b, const QuadOptions& opts = {});

/// Breakpoints accumulating geometrically at `a`: a + (b - a) 2^-k for finite b,
/// a + scale 2^k (k = -50..12) followed by +inf otherwise. Suited to integrands
/// with a spike of unknown width at the left end (Laplace kernels at large rate).
std::vector<double> dyadic_points(double a, double b, double scale = 1.0);

/// Integral of f over an axis-aligned box in dimension 1 or 2 (nested adaptive).
/// `cuts[i]` are extra breakpoints along axis i (may be empty).
double integrate_box(const std::function<double(const Vector&)>& f, const Vector& lo,
                     const Vector& hi, const std::vector<std::vector<double>>& cuts = {},
                     const QuadOptions& opts = {});

/// Probability law with density proportional to exp(log_f) on [lower, upper],
/// tabulated on Gauss-Kronrod cells spanning its bulk. The bracket starts at
/// centre +- 12 spread, widens until both ends are 40 nats below the peak, then
/// shrinks onto the region within 45 nats of it. Callers own whatever log_f
/// captures for the lifetime of the table.
class TabulatedLaw {
 public:
  TabulatedLaw(ScalarFunction log_f, double centre, double spread, double lower, double upper,
               int cells = 256);

  double cdf(double y) const;
  /// Inverse CDF by safeguarded Newton, to 1e-12 of the bracket width.
  double quantile(double u) const;
  /// log of the integral of exp(log_f) over the bracket.
  double log_mass() const { return peak_ + std::log(cum_.back()); }
  double lower() const { return xs_.front(); }
  double upper() const { return xs_.back(); }

 private:
  double f(double y) const;
  ScalarFunction log_f_;
  double peak_ = 0.0;
  std::vector<double> xs_;
  std::vector<double> cum_;
};

}  // namespace bridgesim
