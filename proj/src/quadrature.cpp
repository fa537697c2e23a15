#include "bridgesim/quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <utility>

#include "bridgesim/errors.hpp"

namespace bridgesim {

namespace {

// Kronrod abscissae (positive half, descending) and weights; odd indices are
// the 7-point Gauss nodes.
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

enum class Map { finite, to_pos_inf, to_neg_inf };

// Piece of the integration domain in its working coordinate.
struct Piece {
  double a, b;  // working coordinate bounds
  Map map;
  double anchor;  // finite end for infinite maps
  double value, error;
  bool operator<(const Piece& o) const { return error < o.error; }
};

double eval_mapped(const ScalarFunction& f, Map map, double anchor, double u) {
  switch (map) {
    case Map::finite:
      return f(u);
    case Map::to_pos_inf: {
      const double x = anchor + (1.0 - u) / u;
      const double v = f(x);
      return v == 0.0 ? 0.0 : v / (u * u);
    }
    case Map::to_neg_inf: {
      const double x = anchor - (1.0 - u) / u;
      const double v = f(x);
      return v == 0.0 ? 0.0 : v / (u * u);
    }
  }
  return 0.0;
}

void rule(const ScalarFunction& f, Piece& p) {
  const double centre = 0.5 * (p.a + p.b);
  const double half = 0.5 * (p.b - p.a);
  const double fc = eval_mapped(f, p.map, p.anchor, centre);
  double kron = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double f1 = eval_mapped(f, p.map, p.anchor, centre - dx);
    const double f2 = eval_mapped(f, p.map, p.anchor, centre + dx);
    kron += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  p.value = kron * half;
  p.error = std::abs((kron - gauss) * half);
}

std::vector<Piece> make_pieces(std::span<const double> points) {
  std::vector<Piece> pieces;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const double a = points[i];
    const double b = points[i + 1];
    if (!(a < b)) continue;
    if (std::isinf(a) && std::isinf(b)) {
      pieces.push_back({0.0, 1.0, Map::to_neg_inf, 0.0, 0, 0});
      pieces.push_back({0.0, 1.0, Map::to_pos_inf, 0.0, 0, 0});
    } else if (std::isinf(b)) {
      pieces.push_back({0.0, 1.0, Map::to_pos_inf, a, 0, 0});
    } else if (std::isinf(a)) {
      pieces.push_back({0.0, 1.0, Map::to_neg_inf, b, 0, 0});
    } else {
      pieces.push_back({a, b, Map::finite, 0.0, 0, 0});
    }
  }
  return pieces;
}

}  // namespace

QuadResult gauss_kronrod15(const ScalarFunction& f, double a, double b) {
  Piece p{a, b, Map::finite, 0.0, 0, 0};
  rule(f, p);
  return {p.value, p.error, 15, true};
}

QuadResult integrate(const ScalarFunction& f, std::span<const double> points,
                     const QuadOptions& opts) {
  std::vector<Piece> initial = make_pieces(points);
  QuadResult out;
  if (initial.empty()) {
    out.converged = true;
    return out;
  }
  std::priority_queue<Piece> heap;
  double total = 0.0;
  double total_err = 0.0;
  for (auto& p : initial) {
    rule(f, p);
    out.evaluations += 15;
    total += p.value;
    total_err += p.error;
    heap.push(p);
  }
  auto done = [&] {
    return total_err <= std::max(opts.abs_tol, opts.rel_tol * std::abs(total));
  };
  int splits = 0;
  while (!done() && splits < opts.max_subdivisions) {
    if (!std::isfinite(total) || !std::isfinite(total_err)) break;
    Piece worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      // Interval cannot be split further in floating point.
      heap.push({worst.a, worst.b, worst.map, worst.anchor, worst.value, 0.0});
      total_err -= worst.error;
      continue;
    }
    Piece left{worst.a, mid, worst.map, worst.anchor, 0, 0};
    Piece right{mid, worst.b, worst.map, worst.anchor, 0, 0};
    rule(f, left);
    rule(f, right);
    out.evaluations += 30;
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++splits;
  }
  // Re-sum to shed accumulated cancellation in the running totals.
  total = 0.0;
  total_err = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    total_err += heap.top().error;
    heap.pop();
  }
  out.value = total;
  out.error = total_err;
  out.converged = std::isfinite(total) &&
                  total_err <= std::max(opts.abs_tol, opts.rel_tol * std::abs(total));
  return out;
}

QuadResult integrate(const ScalarFunction& f, double a, double b, const QuadOptions& opts) {
  if (a > b) {
    QuadResult r = integrate(f, b, a, opts);
    r.value = -r.value;
    return r;
  }
  const std::array<double, 2> pts{a, b};
  return integrate(f, std::span<const double>(pts), opts);
}

double integrate_checked(const ScalarFunction& f, std::span<const double> points,
                         const QuadOptions& opts) {
  const QuadResult r = integrate(f, points, opts);
  if (!std::isfinite(r.value)) throw QuadratureError("quadrature produced a non-finite value");
  if (!r.converged) {
    throw QuadratureError("quadrature did not converge: value " + std::to_string(r.value) +
                          ", error estimate " + std::to_string(r.error));
  }
  return r.value;
}

double integrate_checked(const ScalarFunction& f, double a, double b, const QuadOptions& opts) {
  const std::array<double, 2> pts{std::min(a, b), std::max(a, b)};
  const double v = integrate_checked(f, std::span<const double>(pts), opts);
  return a <= b ? v : -v;
}

std::vector<double> dyadic_points(double a, double b, double scale) {
  std::vector<double> pts{a};
  if (std::isfinite(b)) {
    for (int k = 50; k >= 1; --k) pts.push_back(a + (b - a) * std::ldexp(1.0, -k));
    pts.push_back(b);
  } else {
    for (int k = -50; k <= 12; ++k) pts.push_back(a + scale * std::ldexp(1.0, k));
    pts.push_back(std::numeric_limits<double>::infinity());
  }
  return pts;
}

double integrate_box(const std::function<double(const Vector&)>& f, const Vector& lo,
                     const Vector& hi, const std::vector<std::vector<double>>& cuts,
                     const QuadOptions& opts) {
  const auto d = lo.size();
  auto points_for = [&](Eigen::Index axis) {
    std::vector<double> pts{lo(axis)};
    if (static_cast<std::size_t>(axis) < cuts.size()) {
      for (double c : cuts[axis])
        if (c > lo(axis) && c < hi(axis)) pts.push_back(c);
    }
    pts.push_back(hi(axis));
    std::sort(pts.begin() + 1, pts.end() - 1);
    return pts;
  };
  if (d == 1) {
    const auto pts = points_for(0);
    return integrate_checked([&](double x) { return f(scalar_state(x)); }, pts, opts);
  }
  if (d == 2) {
    const auto outer = points_for(0);
    const auto inner = points_for(1);
    return integrate_checked(
        [&](double x0) {
          return integrate_checked(
              [&](double x1) {
                Vector v(2);
                v << x0, x1;
                return f(v);
              },
              inner, opts);
        },
        outer, opts);
  }
  throw ParamError("box quadrature supports dimension 1 or 2");
}

TabulatedLaw::TabulatedLaw(ScalarFunction log_f, double centre, double spread, double lower,
                           double upper, int cells)
    : log_f_(std::move(log_f)) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (!(lower < upper)) throw ParamError("tabulated law needs lower < upper");
  if (cells < 4) throw ParamError("tabulated law needs at least 4 cells");
  if (!(spread > 0.0) || !std::isfinite(spread)) spread = 1e-8 * std::max(1.0, std::abs(centre));
  double lo = std::max(lower, centre - 12.0 * spread);
  double hi = std::min(upper, centre + 12.0 * spread);
  if (!(lo < hi)) {
    if (centre <= lower) {
      lo = lower;
      hi = std::min(upper, lower + 24.0 * spread);
    } else {
      hi = upper;
      lo = std::max(lower, upper - 24.0 * spread);
    }
  }

  std::vector<double> xs(cells + 1), vals(cells + 1);
  double M = -kInf;
  auto scan = [&](double a, double b) {
    M = -kInf;
    for (int i = 0; i <= cells; ++i) {
      xs[i] = a + (b - a) * i / cells;
      vals[i] = log_f_(xs[i]);
      if (std::isnan(vals[i])) vals[i] = -kInf;
      M = std::max(M, vals[i]);
    }
    xs[cells] = b;
  };

  for (int iter = 0;; ++iter) {
    if (iter > 60) throw NumericsError("tabulated law: could not bracket the mass");
    scan(lo, hi);
    const double w = hi - lo;
    if (M == -kInf) {
      lo = std::max(lower, lo - w);
      hi = std::min(upper, hi + w);
      continue;
    }
    bool grew = false;
    if (lo > lower && vals.front() > M - 40.0) {
      lo = std::max(lower, lo - w);
      grew = true;
    }
    if (hi < upper && vals.back() > M - 40.0) {
      hi = std::min(upper, hi + w);
      grew = true;
    }
    if (!grew) break;
  }
  for (int iter = 0; iter < 8; ++iter) {
    int first = 0, last = cells;
    while (first < cells && vals[first] <= M - 45.0) ++first;
    while (last > 0 && vals[last] <= M - 45.0) --last;
    double a = xs[std::max(first - 1, 0)], b = xs[std::min(last + 1, cells)];
    if (b - a > 0.5 * (hi - lo)) break;
    lo = a;
    hi = b;
    scan(lo, hi);
  }

  peak_ = M;
  xs_ = std::move(xs);
  cum_.assign(cells + 1, 0.0);
  ScalarFunction g = [this](double y) { return f(y); };
  for (int i = 0; i < cells; ++i)
    cum_[i + 1] = cum_[i] + gauss_kronrod15(g, xs_[i], xs_[i + 1]).value;
  if (!(cum_.back() > 0.0) || !std::isfinite(cum_.back()))
    throw NumericsError("tabulated law has no mass");
}

double TabulatedLaw::f(double y) const {
  double v = log_f_(y);
  return std::isfinite(v) ? std::exp(v - peak_) : 0.0;
}

double TabulatedLaw::cdf(double y) const {
  if (y <= xs_.front()) return 0.0;
  if (y >= xs_.back()) return 1.0;
  auto it = std::upper_bound(xs_.begin(), xs_.end(), y);
  std::size_t j = static_cast<std::size_t>(it - xs_.begin()) - 1;
  ScalarFunction g = [this](double v) { return f(v); };
  double part = y > xs_[j] ? gauss_kronrod15(g, xs_[j], y).value : 0.0;
  return std::clamp((cum_[j] + part) / cum_.back(), 0.0, 1.0);
}

double TabulatedLaw::quantile(double u) const {
  const int cells = static_cast<int>(xs_.size()) - 1;
  const double target = std::clamp(u, 0.0, 1.0) * cum_.back();
  int j = static_cast<int>(std::upper_bound(cum_.begin(), cum_.end(), target) - cum_.begin()) - 1;
  j = std::clamp(j, 0, cells - 1);
  while (j > 0 && cum_[j + 1] - cum_[j] <= 0.0) --j;
  const double a = xs_[j], b = xs_[j + 1];
  const double r = target - cum_[j];
  const double mass = cum_[j + 1] - cum_[j];
  ScalarFunction g = [this](double v) { return f(v); };
  double blo = a, bhi = b;
  double y = a + (b - a) * std::clamp(mass > 0 ? r / mass : 0.5, 0.0, 1.0);
  const double tol = 1e-12 * (xs_.back() - xs_.front());
  for (int it = 0; it < 100; ++it) {
    double diff = (y > a ? gauss_kronrod15(g, a, y).value : 0.0) - r;
    if (diff > 0) bhi = y; else blo = y;
    double fy = f(y);
    double next = fy > 0 ? y - diff / fy : 0.5 * (blo + bhi);
    if (!(next > blo && next < bhi)) next = 0.5 * (blo + bhi);
    if (std::abs(next - y) <= tol || bhi - blo <= tol) return next;
    y = next;
  }
  return y;
}

}  // namespace bridgesim
