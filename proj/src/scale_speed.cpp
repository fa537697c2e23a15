#include "bridgesim/scale_speed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bridgesim/errors.hpp"
#include "bridgesim/quadrature.hpp"
#include "bridgesim/special.hpp"

namespace bridgesim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNegInf = -kInf;
const double kLog2 = std::log(2.0);

const QuadOptions kCellQuad{0.0, 1e-12, 200};

// Growth and flattening thresholds for the truncation protocol.
constexpr double kDivergentGrowth = 0.10;
constexpr double kConvergedIncrement = 1e-10;
constexpr double kGeometricRatio = 0.9;
constexpr double kRatioSettled = 1e-3;
constexpr int kMaxTruncations = 64;

// Integral of exp(log_f) over [a, b] relative to a reference log value.
double log_integral_exp(const std::function<double(double)>& log_f, double a, double b,
                        double log_ref) {
  if (a == b) return kNegInf;
  const QuadResult r =
      integrate([&](double y) { return std::exp(log_f(y) - log_ref); }, std::min(a, b),
                std::max(a, b), kCellQuad);
  if (std::isnan(r.value)) throw NumericsError("scale function: NaN in quadrature");
  return log_ref + std::log(r.value);
}

}  // namespace

ScaleFunction::ScaleFunction(DiffusionSpec spec, double reference, std::optional<Interval> interval,
                             double reference_scale, int table_size)
    : spec_(std::move(spec)), c_(reference), scale_(reference_scale) {
  if (spec_.dim != 1) throw ParamError("scale function needs a 1-D diffusion");
  interval_ = interval.value_or(Interval{spec_.domain.lower(0), kInf});
  if (!interval_.contains(c_)) throw DomainError("scale function: reference point not interior");
  if (table_size < 16) throw ParamError("scale function: table too small");

  const double l = interval_.lower;
  const double r = interval_.upper;
  const bool lo_fin = std::isfinite(l);
  const bool hi_fin = std::isfinite(r);
  // Working coordinate u with u = 0 at c.
  double u_min, u_max;
  std::function<double(double)> map;
  if (!lo_fin && !hi_fin) {
    u_min = -std::asinh(1e8);
    u_max = std::asinh(1e8);
    map = [this](double u) { return c_ + scale_ * std::sinh(u); };
  } else if (lo_fin && !hi_fin) {
    u_min = std::log(1e-10);
    u_max = std::log(1e7);
    map = [this, l](double u) { return l + (c_ - l) * std::exp(u); };
  } else if (!lo_fin && hi_fin) {
    u_min = -std::log(1e7);
    u_max = -std::log(1e-10);
    map = [this, r](double u) { return r - (r - c_) * std::exp(-u); };
  } else {
    const double p = (c_ - l) / (r - l);
    const double u0 = std::log(p / (1.0 - p));
    u_min = -23.0;
    u_max = 23.0;
    map = [l, r, u0](double u) { return l + (r - l) / (1.0 + std::exp(-(u + u0))); };
  }
  const double du = (u_max - u_min) / (table_size - 1);
  const auto j0 = static_cast<std::size_t>(std::llround(-u_min / du));
  centre_ = j0;
  table_.resize(static_cast<std::size_t>(table_size));
  for (std::size_t j = 0; j < table_.size(); ++j) {
    const double u = (static_cast<double>(j) - static_cast<double>(j0)) * du;
    table_[j].x = j == j0 ? c_ : map(u);
  }
  table_[j0].log_deriv = 0.0;
  table_[j0].log_abs_scale = kNegInf;
  table_[j0].log_mass = kNegInf;

  auto fill = [&](std::size_t from, std::size_t to) {
    const Node& a = table_[from];
    Node& b = table_[to];
    b.log_deriv = log_deriv_from(a, b.x);
    const auto L = [&](double y) { return log_deriv_from(a, y); };
    const double ref_s = std::max(a.log_deriv, b.log_deriv);
    b.log_abs_scale = special::log_add_exp(a.log_abs_scale, log_integral_exp(L, a.x, b.x, ref_s));
    const auto log_m = [&](double y) { return kLog2 - log_a(y) - L(y); };
    const double ref_m = std::max(log_m(a.x), log_m(b.x));
    b.log_mass = special::log_add_exp(a.log_mass, log_integral_exp(log_m, a.x, b.x, ref_m));
  };
  for (std::size_t j = j0 + 1; j < table_.size(); ++j) fill(j - 1, j);
  for (std::size_t j = j0; j-- > 0;) fill(j + 1, j);
}

double ScaleFunction::log_a(double x) const {
  const double s = spec_.dispersion(0.0, scalar_state(x))(0, 0);
  return std::log(s * s);
}

double ScaleFunction::log_deriv_drift(double x) const {
  const double b = spec_.drift(0.0, scalar_state(x))(0);
  if (b == 0.0) return 0.0;
  const double s = spec_.dispersion(0.0, scalar_state(x))(0, 0);
  return -2.0 * b / (s * s);
}

double ScaleFunction::log_deriv_from(const Node& anchor, double x) const {
  if (x == anchor.x) return anchor.log_deriv;
  const QuadResult r =
      integrate([this](double y) { return log_deriv_drift(y); }, anchor.x, x, kCellQuad);
  if (!std::isfinite(r.value)) {
    throw IntegrabilityError("b/a is not integrable between " + std::to_string(anchor.x) +
                             " and " + std::to_string(x));
  }
  return anchor.log_deriv + r.value;
}

const ScaleFunction::Node& ScaleFunction::anchor_for(double x) const {
  if (x >= c_) {
    auto it = std::upper_bound(table_.begin() + static_cast<std::ptrdiff_t>(centre_), table_.end(),
                               x, [](double v, const Node& n) { return v < n.x; });
    return *(it - 1);
  }
  auto it = std::lower_bound(table_.begin(), table_.begin() + static_cast<std::ptrdiff_t>(centre_),
                             x, [](const Node& n, double v) { return n.x < v; });
  return *it;
}

ScaleFunction::Local ScaleFunction::evaluate(double x, bool want_scale, bool want_mass) const {
  if (!interval_.contains(x)) throw DomainError("scale function evaluated outside the interval");
  const Node& a = anchor_for(x);
  Local out{log_deriv_from(a, x), a.log_abs_scale, a.log_mass};
  if (x == a.x) return out;
  const auto L = [&](double y) { return log_deriv_from(a, y); };
  if (want_scale) {
    const double ref = std::max(a.log_deriv, out.log_deriv);
    out.log_abs_scale = special::log_add_exp(a.log_abs_scale, log_integral_exp(L, a.x, x, ref));
  }
  if (want_mass) {
    const auto log_m = [&](double y) { return kLog2 - log_a(y) - L(y); };
    const double ref = std::max(log_m(a.x), log_m(x));
    out.log_mass = special::log_add_exp(a.log_mass, log_integral_exp(log_m, a.x, x, ref));
  }
  return out;
}

double ScaleFunction::operator()(double x) const {
  const double v = std::exp(log_abs(x));
  return x >= c_ ? v : -v;
}

double ScaleFunction::derivative(double x) const { return std::exp(log_derivative(x)); }

double ScaleFunction::log_derivative(double x) const { return evaluate(x, false, false).log_deriv; }

double ScaleFunction::log_abs(double x) const { return evaluate(x, true, false).log_abs_scale; }

double ScaleFunction::log_speed_density(double x) const {
  return kLog2 - log_a(x) - log_derivative(x);
}

double ScaleFunction::log_speed_mass(double x) const { return evaluate(x, false, true).log_mass; }

double ScaleFunction::inverse(double v) const {
  auto signed_at = [&](const Node& n) {
    const double m = std::exp(n.log_abs_scale);
    return n.x >= c_ ? m : -m;
  };
  // Bracket [lo, hi] with s(lo) <= v <= s(hi).
  double lo, hi;
  if (v <= signed_at(table_.front())) {
    hi = table_.front().x;
    double width = std::max(1.0, std::abs(hi));
    lo = hi - width;
    for (int k = 0; k < 200 && (*this)(std::max(lo, std::nextafter(interval_.lower, kInf))) > v;
         ++k) {
      width *= 2.0;
      lo = hi - width;
      if (lo <= interval_.lower) {
        lo = std::nextafter(interval_.lower, kInf);
        if ((*this)(lo) > v) throw DomainError("scale inverse: value below the range of s");
        break;
      }
    }
  } else if (v >= signed_at(table_.back())) {
    lo = table_.back().x;
    double width = std::max(1.0, std::abs(lo));
    hi = lo + width;
    for (int k = 0; k < 200 && (*this)(std::min(hi, std::nextafter(interval_.upper, -kInf))) < v;
         ++k) {
      width *= 2.0;
      hi = lo + width;
      if (hi >= interval_.upper) {
        hi = std::nextafter(interval_.upper, -kInf);
        if ((*this)(hi) < v) throw DomainError("scale inverse: value above the range of s");
        break;
      }
    }
  } else {
    auto it = std::upper_bound(table_.begin(), table_.end(), v,
                               [&](double val, const Node& n) { return val < signed_at(n); });
    hi = it->x;
    lo = (it - 1)->x;
  }
  // Safeguarded Newton.
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    const Local loc = evaluate(x, true, false);
    const double sx = x >= c_ ? std::exp(loc.log_abs_scale) : -std::exp(loc.log_abs_scale);
    const double f = sx - v;
    if (f == 0.0) return x;
    if (f > 0.0) hi = x; else lo = x;
    double next = x - f / std::exp(loc.log_deriv);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x)) || hi - lo <= 1e-15 * std::max(1.0, std::abs(x)))
      return next;
    x = next;
  }
  return x;
}

double SpeedDensity::operator()(double x) const { return std::exp(log_density(x)); }

std::string to_string(Endpoint e) { return e == Endpoint::lower ? "lower" : "upper"; }

std::string to_string(BoundaryClass c) {
  switch (c) {
    case BoundaryClass::regular: return "regular";
    case BoundaryClass::exit: return "exit";
    case BoundaryClass::entrance: return "entrance";
    case BoundaryClass::natural: return "natural";
  }
  return "unknown";
}

namespace {

// Cutoff sequence towards an endpoint: doubling distances on infinite sides,
// halving gaps on finite ones.
double cutoff(const ScaleFunction& sf, Endpoint e, int k) {
  const Interval& iv = sf.interval();
  const double c = sf.reference();
  if (e == Endpoint::upper) {
    if (std::isinf(iv.upper)) return c + sf.reference_scale() * std::ldexp(1.0, k);
    return iv.upper - (iv.upper - c) * std::ldexp(1.0, -(k + 1));
  }
  if (std::isinf(iv.lower)) return c - sf.reference_scale() * std::ldexp(1.0, k);
  return iv.lower + (c - iv.lower) * std::ldexp(1.0, -(k + 1));
}

// Drives the truncation protocol; `piece(a, b)` returns the nonnegative
// contribution between consecutive cutoffs.
TruncatedIntegral run_truncation(const ScaleFunction& sf, Endpoint e,
                                 const std::function<double(double, double)>& piece,
                                 const std::string& label) {
  TruncatedIntegral out;
  std::vector<double> inc;
  double prev_cut = sf.reference();
  double total = 0.0;
  for (int k = 0; k < kMaxTruncations; ++k) {
    const double cut = cutoff(sf, e, k);
    if (!(cut != prev_cut) || !std::isfinite(cut)) break;
    const double d = piece(prev_cut, cut);
    if (std::isnan(d)) throw NumericsError(label + ": NaN partial integral");
    total += d;
    inc.push_back(d);
    out.cutoffs.push_back(cut);
    out.partials.push_back(total);
    prev_cut = cut;
    if (!std::isfinite(total)) {
      out.divergent = true;
      out.value = kInf;
      return out;
    }
    const std::size_t n = inc.size();
    if (n >= 4) {
      bool geometric = true;
      for (std::size_t i = n - 3; i < n; ++i)
        geometric = geometric && inc[i - 1] > 0.0 && inc[i] <= kGeometricRatio * inc[i - 1];
      const double rho = geometric ? inc[n - 1] / inc[n - 2] : 0.0;
      const double rho_prev = geometric ? inc[n - 2] / inc[n - 3] : 0.0;
      // Extrapolate only once the ratio has settled.
      if (geometric && std::abs(rho / rho_prev - 1.0) <= kRatioSettled) {
        out.value = total + inc[n - 1] * rho / (1.0 - rho);
        return out;
      }
      bool growing = true;
      for (std::size_t i = n - 3; i < n; ++i) {
        const double before = out.partials[i - 1];
        growing = growing && before > 0.0 && inc[i] >= kDivergentGrowth * before;
      }
      // Shrinking increments are slow convergence, not growth.
      const bool decaying = inc[n - 2] <= kGeometricRatio * inc[n - 3] &&
                            inc[n - 1] <= kGeometricRatio * inc[n - 2];
      if (growing && !decaying) {
        out.divergent = true;
        out.value = total;
        return out;
      }
    }
    if (n >= 2 && inc.back() <= kConvergedIncrement * std::abs(total)) {
      out.value = total;
      return out;
    }
  }
  throw InconclusiveError(label + " at the " + to_string(e) + " endpoint is inconclusive",
                          out.partials);
}

double integrate_log(const std::function<double(double)>& log_f, double a, double b) {
  const QuadResult r = integrate(
      [&](double x) {
        const double lf = log_f(x);
        return lf == kNegInf ? 0.0 : std::exp(lf);
      },
      std::min(a, b), std::max(a, b), QuadOptions{0.0, 1e-10, 400});
  return r.value;
}

TruncatedIntegral attainability_integral(const ScaleFunction& sf, Endpoint e) {
  return run_truncation(
      sf, e,
      [&](double a, double b) {
        return integrate_log(
            [&](double x) { return sf.log_derivative(x) + sf.log_speed_mass(x); }, a, b);
      },
      "attainability integral");
}

TruncatedIntegral entrance_integral(const ScaleFunction& sf, Endpoint e) {
  return run_truncation(
      sf, e,
      [&](double a, double b) {
        return integrate_log([&](double x) { return sf.log_speed_density(x) + sf.log_abs(x); }, a,
                             b);
      },
      "entrance integral");
}

}  // namespace

nlohmann::json to_json(const TruncatedIntegral& ti) {
  nlohmann::json j;
  j["divergent"] = ti.divergent;
  j["value"] = std::isfinite(ti.value) ? nlohmann::json(ti.value) : nlohmann::json("inf");
  nlohmann::json partials = nlohmann::json::array();
  for (double p : ti.partials)
    partials.push_back(std::isfinite(p) ? nlohmann::json(p) : nlohmann::json("inf"));
  j["cutoffs"] = ti.cutoffs;
  j["partials"] = partials;
  return j;
}

nlohmann::json to_json(const BoundaryReport& report) {
  nlohmann::json j;
  j["endpoint"] = to_string(report.endpoint);
  j["location"] = std::isfinite(report.location)
                      ? nlohmann::json(report.location)
                      : nlohmann::json(report.location > 0 ? "inf" : "-inf");
  j["classification"] = to_string(report.classification);
  j["inaccessible"] = report.inaccessible;
  j["integrals"] = {{"attainability", to_json(report.attainability)},
                    {"entrance", to_json(report.entrance)}};
  return j;
}

InaccessibilityResult check_inaccessible(const SpeedDensity& sd, Endpoint endpoint) {
  InaccessibilityResult out;
  out.integral = attainability_integral(sd.scale(), endpoint);
  out.inaccessible = out.integral.divergent;
  return out;
}

BoundaryReport classify_boundary(const SpeedDensity& sd, Endpoint endpoint) {
  BoundaryReport rep;
  rep.endpoint = endpoint;
  rep.location = endpoint == Endpoint::lower ? sd.scale().interval().lower
                                             : sd.scale().interval().upper;
  rep.attainability = attainability_integral(sd.scale(), endpoint);
  rep.entrance = entrance_integral(sd.scale(), endpoint);
  const bool attain = !rep.attainability.divergent;
  const bool enter = !rep.entrance.divergent;
  if (attain && enter) rep.classification = BoundaryClass::regular;
  else if (attain) rep.classification = BoundaryClass::exit;
  else if (enter) rep.classification = BoundaryClass::entrance;
  else rep.classification = BoundaryClass::natural;
  rep.inaccessible = !attain;
  return rep;
}

double scale_at_endpoint(const ScaleFunction& sf, Endpoint endpoint) {
  const TruncatedIntegral ti = run_truncation(
      sf, endpoint,
      [&](double a, double b) {
        const double sa = a == sf.reference() ? 0.0 : std::exp(sf.log_abs(a));
        return std::exp(sf.log_abs(b)) - sa;
      },
      "scale limit");
  const double v = ti.divergent ? kInf : ti.value;
  return endpoint == Endpoint::upper ? v : -v;
}

bool linear_growth_probe(const DiffusionSpec& spec, double K, std::span<const double> grid) {
  for (double x : grid) {
    const double b = spec.drift(0.0, scalar_state(x))(0);
    if (!(std::abs(b) < K * (1.0 + std::abs(x)))) return false;
  }
  return true;
}

NaturalScale to_natural_scale(ScalePtr sf) {
  NaturalScale out;
  out.interval = {scale_at_endpoint(*sf, Endpoint::lower), scale_at_endpoint(*sf, Endpoint::upper)};
  out.spec.dim = 1;
  out.spec.domain = DomainBox::half_line(out.interval.lower);
  out.spec.drift = [](double, const Vector&) { return scalar_state(0.0); };
  out.spec.dispersion = [sf](double t, const Vector& y) {
    const double x = sf->inverse(y(0));
    return Matrix::Constant(1, 1, sf->derivative(x) * sf->spec().dispersion(t, scalar_state(x))(0, 0));
  };
  return out;
}

}  // namespace bridgesim
