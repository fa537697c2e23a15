#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>

#include "bridgesim/diffusion.hpp"

namespace bridgesim {

/// Axis-aligned box; bounds may be infinite.
struct Region {
  Vector lo;
  Vector hi;

  static Region whole(int dim);
  static Region interval(double lo, double hi);
  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vector& y) const;
  bool bounded() const;
};

/// Terminal-law density H for weak conditioning (dmu/dP_{s,T*}(x, .)).
struct WeakConditioning {
  std::function<double(const Vector&)> density;
  /// When given and bounded, h is computed by adaptive quadrature over it;
  /// otherwise by importance-sampled Monte Carlo.
  std::optional<Region> support;
};

/// log h and grad log h at one point.
struct HValue {
  double log_h = 0.0;
  Vector grad_log;
};

inline constexpr double kHFloor = 1e-300;

/// Space-time harmonic function for the h-transform: strong conditioning on a
/// terminal point, weak conditioning on a terminal density, the indicator of a
/// terminal region, or an explicitly supplied h.
///
/// All evaluation is in log space. Values below kHFloor raise HFloorError and
/// times at or beyond the horizon raise TimeError. Copies share the immutable
/// implementation; Monte Carlo nodes for the weak case are frozen at
/// construction, so evaluation is deterministic.
class HFunction {
 public:
  enum class Kind { strong, weak, indicator, explicit_h };

  static HFunction strong(ModelPtr model, double horizon, Vector target);
  static HFunction weak(ModelPtr model, double horizon, WeakConditioning H,
                        std::uint64_t mc_seed = 0x5eedULL, int mc_nodes = 65536);
  static HFunction indicator(ModelPtr model, double horizon, Region region);
  static HFunction explicit_h(ModelPtr model, std::function<double(double, const Vector&)> log_h,
                              std::function<Vector(double, const Vector&)> grad_log_h,
                              double horizon = std::numeric_limits<double>::infinity());
  /// h = 1: the unconditioned diffusion.
  static HFunction one(ModelPtr model,
                       double horizon = std::numeric_limits<double>::infinity());

  Kind kind() const;
  double horizon() const;
  const ModelPtr& model() const;
  /// Strong conditioning target z.
  const std::optional<Vector>& target() const;
  /// Indicator region, when kind() == indicator.
  const std::optional<Region>& region() const;

  double log_value(double t, const Vector& y) const;
  double value(double t, const Vector& y) const;
  Vector grad_log(double t, const Vector& y) const;
  Vector grad(double t, const Vector& y) const;
  HValue evaluate(double t, const Vector& y) const;
  /// Monte Carlo standard error of value() (0 for deterministic evaluation).
  double standard_error(double t, const Vector& y) const;

  /// log of h(T*, .): log H for weak conditioning, log 1_E for an indicator.
  /// Throws ParamError for strong and explicit kinds.
  double log_terminal(const Vector& y) const;

  struct Impl;

 private:
  explicit HFunction(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

/// Diffusion + h-function + start (s, x): the conditioned process.
struct BridgeProcess {
  ModelPtr model;
  HFunction h;
  double start_time = 0.0;
  Vector start;

  /// Validates s < T*, x in the domain, and h(s, x) > 0 (p(T* - s, x, z) > 0
  /// in the strong case).
  static BridgeProcess make(ModelPtr model, HFunction h, double start_time, Vector start);

  const DiffusionSpec& spec() const { return model->spec; }
  double horizon() const { return h.horizon(); }
  const std::optional<Vector>& target() const { return h.target(); }
};

/// b(t, y) + a(t, y) grad h / h.
Vector bridge_drift(const BridgeProcess& bp, double t, const Vector& y);

/// P^h_{s,t}(x, E) = int_E h(t, y) p(s, t, x, y) m(dy) / h(s, x), in 1 or 2 dimensions.
double h_transform_transition(const HFunction& h, double s, double t, const Vector& x,
                              const Region& region);

/// h(s, x) for weak conditioning is E[H(X_T*)]; returns it with its
/// Monte Carlo standard error (0 for quadrature).
struct WeakMass {
  double mass;
  double standard_error;
};
WeakMass weak_normalization(const HFunction& h, double s, const Vector& x);

}  // namespace bridgesim
