#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bridgesim/diffusion.hpp"

namespace bridgesim {

/// Open state interval (lower, upper) of a 1-D diffusion; ends may be infinite.
struct Interval {
  double lower;
  double upper;
  bool contains(double x) const { return x > lower && x < upper; }
};

/// Scale function s(x) = int_c^x exp(-2 int_c^y b/a) dy of a time-homogeneous
/// 1-D diffusion, with speed density m(x) = 2 / (a(x) s'(x)).
///
/// Values are anchored on a 4096-node table (log-spaced towards finite ends,
/// sinh-spaced on infinite ones) holding log s', log|s| and log|m((c, x))|;
/// evaluation off the nodes integrates from the nearest node on the side of c,
/// so accuracy does not depend on the table spacing. Everything is kept in
/// log space: s' = e^(x^2) for OU overflows long before the tests end.
class ScaleFunction {
 public:
  /// `interval` defaults to the diffusion's domain (lower bound l, upper +inf).
  /// `reference_scale` sets the spacing near c on infinite sides.
  ScaleFunction(DiffusionSpec spec, double reference, std::optional<Interval> interval = {},
                double reference_scale = 1.0, int table_size = 4096);

  const DiffusionSpec& spec() const { return spec_; }
  double reference() const { return c_; }
  double reference_scale() const { return scale_; }
  const Interval& interval() const { return interval_; }

  double operator()(double x) const;
  double derivative(double x) const;
  double log_derivative(double x) const;
  /// log|s(x)|; -inf at x = c.
  double log_abs(double x) const;
  /// log of the speed density 2 / (a s').
  double log_speed_density(double x) const;
  /// log|m((c, x))| (mass between c and x, either side).
  double log_speed_mass(double x) const;
  /// s^-1(v) for v in the range of s over the table.
  double inverse(double v) const;

 private:
  struct Node {
    double x;
    double log_deriv;
    double log_abs_scale;
    double log_mass;
  };
  struct Local {
    double log_deriv;
    double log_abs_scale;
    double log_mass;
  };
  double log_a(double x) const;
  double log_deriv_drift(double x) const;  // -2 b / a
  const Node& anchor_for(double x) const;
  Local evaluate(double x, bool want_scale, bool want_mass) const;
  double log_deriv_from(const Node& anchor, double x) const;

  DiffusionSpec spec_;
  double c_;
  double scale_;
  Interval interval_;
  std::vector<Node> table_;
  std::size_t centre_ = 0;
};

using ScalePtr = std::shared_ptr<const ScaleFunction>;

/// Speed measure density of a ScaleFunction.
class SpeedDensity {
 public:
  explicit SpeedDensity(ScalePtr scale) : scale_(std::move(scale)) {}
  double operator()(double x) const;
  double log_density(double x) const { return scale_->log_speed_density(x); }
  const ScaleFunction& scale() const { return *scale_; }
  ScalePtr scale_ptr() const { return scale_; }

 private:
  ScalePtr scale_;
};

enum class Endpoint { lower, upper };
enum class BoundaryClass { regular, exit, entrance, natural };

std::string to_string(Endpoint e);
std::string to_string(BoundaryClass c);

/// Outcome of the truncation protocol for an improper integral.
struct TruncatedIntegral {
  double value = 0.0;  // extrapolated limit when convergent, last partial otherwise
  bool divergent = false;
  std::vector<double> cutoffs;
  std::vector<double> partials;
};

struct BoundaryReport {
  Endpoint endpoint = Endpoint::upper;
  double location = 0.0;
  BoundaryClass classification = BoundaryClass::natural;
  bool inaccessible = true;
  /// int m((c, x)) s'(x) dx towards the endpoint; finite iff the endpoint is attainable.
  TruncatedIntegral attainability;
  /// int |s(x)| m(dx) towards the endpoint; finite iff the process can start there.
  TruncatedIntegral entrance;
};

nlohmann::json to_json(const TruncatedIntegral& ti);
nlohmann::json to_json(const BoundaryReport& report);

struct InaccessibilityResult {
  bool inaccessible = true;
  TruncatedIntegral integral;
};

/// Evaluates the inaccessibility integral on an expanding truncation sequence.
/// Throws InconclusiveError when the partials neither settle nor blow up.
InaccessibilityResult check_inaccessible(const SpeedDensity& sd, Endpoint endpoint);

/// Both Feller integrals, mapped onto {regular, exit, entrance, natural}.
BoundaryReport classify_boundary(const SpeedDensity& sd, Endpoint endpoint);

/// Limit of the scale function at an endpoint (+-inf when divergent).
double scale_at_endpoint(const ScaleFunction& sf, Endpoint endpoint);

/// |b(x)| < K (1 + |x|) on every grid point.
bool linear_growth_probe(const DiffusionSpec& spec, double K, std::span<const double> grid);

/// The diffusion Y = s(X) in natural scale: zero drift, dispersion s'(x) sigma(x)
/// at x = s^-1(y), on the image interval of s.
struct NaturalScale {
  DiffusionSpec spec;
  Interval interval;
};
NaturalScale to_natural_scale(ScalePtr sf);

}  // namespace bridgesim
