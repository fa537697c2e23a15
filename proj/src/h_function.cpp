#include "bridgesim/h_function.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "bridgesim/errors.hpp"
#include "bridgesim/quadrature.hpp"
#include "bridgesim/rng.hpp"
#include "bridgesim/special.hpp"

namespace bridgesim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNegInf = -kInf;
const double kLogFloor = std::log(kHFloor);

const QuadOptions kHQuad{1e-14, 1e-10, 4000};

}  // namespace

Region Region::whole(int dim) {
  return {Vector::Constant(dim, -kInf), Vector::Constant(dim, kInf)};
}

Region Region::interval(double lo, double hi) { return {scalar_state(lo), scalar_state(hi)}; }

bool Region::contains(const Vector& y) const {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!(y(i) >= lo(i) && y(i) <= hi(i))) return false;
  return true;
}

bool Region::bounded() const { return lo.allFinite() && hi.allFinite(); }

struct HFunction::Impl {
  Kind kind = Kind::explicit_h;
  ModelPtr model;
  double horizon = kInf;
  std::optional<Vector> target;
  std::optional<Region> region;
  WeakConditioning weak;
  Eigen::MatrixXd mc_nodes;  // d x N standard normals
  std::function<double(double, const Vector&)> log_h;
  std::function<Vector(double, const Vector&)> grad_log_h;

  int dim() const { return model ? model->dim() : 1; }

  // Region clipped to the model domain.
  Region clipped(const Region& r) const {
    Region c = r;
    for (Eigen::Index i = 0; i < c.lo.size(); ++i)
      c.lo(i) = std::max(c.lo(i), model->spec.domain.lower(i));
    return c;
  }

  // Breakpoints per axis around y, scaled by the local spread over tau.
  std::vector<std::vector<double>> cuts(double t, const Vector& y, double tau) const {
    const Matrix a = diffusion_matrix(model->spec.dispersion(t, y));
    std::vector<std::vector<double>> out(static_cast<std::size_t>(y.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sd = std::sqrt(std::max(a(i, i), 1e-300) * tau);
      for (double k : {-30.0, -10.0, -4.0, -1.0, 0.0, 1.0, 4.0, 10.0, 30.0})
        out[static_cast<std::size_t>(i)].push_back(y(i) + k * sd);
    }
    return out;
  }

  // log of int_R g(zeta) p(t, T, y, zeta) m(dzeta), and optionally its gradient in y.
  HValue quadrature(double t, const Vector& y, const Region& support,
                    const std::function<double(const Vector&)>& g, bool want_grad) const {
    const double tau = horizon - t;
    const Region r = clipped(support);
    const auto cut = cuts(t, y, tau);
    auto log_kernel = [&](const Vector& z) {
      return model->log_density(t, horizon, y, z) + model->measure.log_weight_at(z);
    };
    // Scale by the kernel at its mode proxy to keep tiny masses representable.
    Vector probe = y;
    for (Eigen::Index i = 0; i < y.size(); ++i) probe(i) = std::clamp(y(i), r.lo(i), r.hi(i));
    double log_ref = log_kernel(probe);
    if (!std::isfinite(log_ref)) log_ref = 0.0;
    const double mass = integrate_box(
        [&](const Vector& z) {
          const double gz = g(z);
          if (gz == 0.0) return 0.0;
          return gz * std::exp(log_kernel(z) - log_ref);
        },
        r.lo, r.hi, cut, kHQuad);
    HValue out;
    out.log_h = mass > 0.0 ? std::log(mass) + log_ref : kNegInf;
    if (!want_grad) return out;
    out.grad_log = Vector::Zero(y.size());
    if (model->grad_log_x && mass > 0.0) {
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double gi = integrate_box(
            [&](const Vector& z) {
              const double gz = g(z);
              if (gz == 0.0) return 0.0;
              return gz * std::exp(log_kernel(z) - log_ref) *
                     model->grad_log_x(t, horizon, y, z)(i);
            },
            r.lo, r.hi, cut, kHQuad);
        out.grad_log(i) = gi / mass;
      }
    } else {
      out.grad_log = fd_gradient(
          [&](const Vector& yy) { return quadrature(t, yy, support, g, false).log_h; },
          y);
    }
    return out;
  }

  // Closed form P(N(mean, cov) in box) for diagonal covariances.
  std::optional<HValue> gaussian_box(double t, const Vector& y, const Region& box) const {
    if (!model->moments) return std::nullopt;
    const GaussianMoments gm = model->moments(t, horizon, y);
    const Matrix off = gm.cov - Matrix(gm.cov.diagonal().asDiagonal());
    if (off.cwiseAbs().maxCoeff() > 0.0) return std::nullopt;
    HValue out;
    Vector dlog_dmean(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sd = std::sqrt(gm.cov(i, i));
      const double ulo = (box.lo(i) - gm.mean(i)) / sd;
      const double uhi = (box.hi(i) - gm.mean(i)) / sd;
      double log_p;
      if (ulo > 0.0) {
        log_p = special::log_sub_exp(special::log_normal_sf(ulo), special::log_normal_sf(uhi));
      } else {
        log_p = special::log_sub_exp(special::log_normal_cdf(uhi), special::log_normal_cdf(ulo));
      }
      out.log_h += log_p;
      const double phi_lo = std::isfinite(ulo) ? std::exp(special::log_normal_pdf(ulo) - log_p) : 0.0;
      const double phi_hi = std::isfinite(uhi) ? std::exp(special::log_normal_pdf(uhi) - log_p) : 0.0;
      dlog_dmean(i) = (phi_lo - phi_hi) / sd;
    }
    out.grad_log = gm.mean_jacobian.transpose() * dlog_dmean;
    return out;
  }

  // Importance-sampled estimate of E[H(X_T) | X_t = y]; returns log mean and
  // the standard error of the mean.
  std::pair<double, double> monte_carlo(double t, const Vector& y) const {
    const double tau = horizon - t;
    const auto n = mc_nodes.cols();
    const int d = dim();
    double sum = 0.0;
    double sum_sq = 0.0;
    Matrix sigma;
    Vector shift;
    if (!model->sample) {
      sigma = model->spec.dispersion(t, y) * std::sqrt(tau);
      shift = y + model->spec.drift(t, y) * tau;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector xi = mc_nodes.col(j);
      double w;
      if (model->sample) {
        const Vector z = model->sample(t, horizon, y, xi);
        w = model->spec.domain.contains(z) ? weak.density(z) : 0.0;
      } else {
        const Vector z = shift + sigma * xi;
        if (!model->spec.domain.contains(z)) {
          w = 0.0;
        } else {
          // proposal density N(shift, sigma sigma^T) at z
          const double log_q = -0.5 * xi.squaredNorm() - d * special::kLogSqrt2Pi -
                               std::log(std::abs(sigma.determinant()));
          const double log_p = model->log_density(t, horizon, y, z) + model->measure.log_weight_at(z);
          w = weak.density(z) * std::exp(log_p - log_q);
        }
      }
      sum += w;
      sum_sq += w * w;
    }
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
    return {mean > 0.0 ? std::log(mean) : kNegInf, std::sqrt(var / static_cast<double>(n))};
  }

  HValue raw(double t, const Vector& y, bool want_grad) const {
    switch (kind) {
      case Kind::strong: {
        HValue out;
        out.log_h = model->log_density(t, horizon, y, *target);
        if (want_grad) out.grad_log = transition_grad_log(*model, t, horizon, y, *target);
        return out;
      }
      case Kind::indicator: {
        if (auto g = gaussian_box(t, y, clipped(*region))) return *g;
        return quadrature(t, y, *region, [](const Vector&) { return 1.0; }, want_grad);
      }
      case Kind::weak: {
        if (weak.support && weak.support->bounded())
          return quadrature(t, y, *weak.support, weak.density, want_grad);
        HValue out;
        out.log_h = monte_carlo(t, y).first;
        if (want_grad)
          out.grad_log = fd_gradient([&](const Vector& yy) { return monte_carlo(t, yy).first; }, y);
        return out;
      }
      case Kind::explicit_h: {
        HValue out;
        out.log_h = log_h(t, y);
        if (want_grad) out.grad_log = grad_log_h(t, y);
        return out;
      }
    }
    return {};
  }

  HValue checked(double t, const Vector& y, bool want_grad) const {
    if (!(t < horizon)) throw TimeError("h evaluated at or beyond the horizon");
    HValue v = raw(t, y, want_grad);
    if (std::isnan(v.log_h) || v.log_h < kLogFloor) {
      std::ostringstream os;
      os << "h below floor at t=" << t << ", y=" << y.transpose() << " (log h = " << v.log_h << ")";
      throw HFloorError(os.str());
    }
    return v;
  }
};

HFunction HFunction::strong(ModelPtr model, double horizon, Vector target) {
  if (!model) throw ParamError("strong h: model required");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ParamError("strong conditioning needs a finite positive horizon");
  if (target.size() != model->dim()) throw ParamError("strong h: target dimension mismatch");
  if (!model->spec.domain.contains(target)) throw DomainError("strong h: target outside domain");
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::strong;
  impl->model = std::move(model);
  impl->horizon = horizon;
  impl->target = std::move(target);
  return HFunction(std::move(impl));
}

HFunction HFunction::weak(ModelPtr model, double horizon, WeakConditioning H, std::uint64_t mc_seed,
                          int mc_nodes) {
  if (!model) throw ParamError("weak h: model required");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ParamError("weak conditioning needs a finite positive horizon");
  if (!H.density) throw ParamError("weak h: terminal density required");
  if (H.support && H.support->dim() != model->dim())
    throw ParamError("weak h: support dimension mismatch");
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::weak;
  impl->model = std::move(model);
  impl->horizon = horizon;
  impl->weak = std::move(H);
  if (!(impl->weak.support && impl->weak.support->bounded())) {
    if (mc_nodes < 2) throw ParamError("weak h: need at least two Monte Carlo nodes");
    Engine eng(mc_seed);
    std::normal_distribution<double> n01;
    impl->mc_nodes.resize(impl->model->dim(), mc_nodes);
    for (Eigen::Index j = 0; j < mc_nodes; ++j)
      for (Eigen::Index i = 0; i < impl->mc_nodes.rows(); ++i) impl->mc_nodes(i, j) = n01(eng);
  }
  return HFunction(std::move(impl));
}

HFunction HFunction::indicator(ModelPtr model, double horizon, Region region) {
  if (!model) throw ParamError("indicator h: model required");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ParamError("indicator conditioning needs a finite positive horizon");
  if (region.dim() != model->dim()) throw ParamError("indicator h: region dimension mismatch");
  if ((region.hi.array() <= region.lo.array()).any()) throw ParamError("indicator h: empty region");
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::indicator;
  impl->model = std::move(model);
  impl->horizon = horizon;
  impl->region = std::move(region);
  return HFunction(std::move(impl));
}

HFunction HFunction::explicit_h(ModelPtr model, std::function<double(double, const Vector&)> log_h,
                                std::function<Vector(double, const Vector&)> grad_log_h,
                                double horizon) {
  if (!log_h || !grad_log_h) throw ParamError("explicit h: log h and its gradient are required");
  if (!(horizon > 0.0)) throw ParamError("explicit h: horizon must be positive");
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::explicit_h;
  impl->model = std::move(model);
  impl->horizon = horizon;
  impl->log_h = std::move(log_h);
  impl->grad_log_h = std::move(grad_log_h);
  return HFunction(std::move(impl));
}

HFunction HFunction::one(ModelPtr model, double horizon) {
  const int d = model ? model->dim() : 1;
  return explicit_h(
      std::move(model), [](double, const Vector&) { return 0.0; },
      [d](double, const Vector&) { return Vector(Vector::Zero(d)); }, horizon);
}

HFunction::Kind HFunction::kind() const { return impl_->kind; }
double HFunction::horizon() const { return impl_->horizon; }
const ModelPtr& HFunction::model() const { return impl_->model; }
const std::optional<Vector>& HFunction::target() const { return impl_->target; }
const std::optional<Region>& HFunction::region() const { return impl_->region; }

double HFunction::log_value(double t, const Vector& y) const {
  return impl_->checked(t, y, false).log_h;
}

double HFunction::value(double t, const Vector& y) const { return std::exp(log_value(t, y)); }

Vector HFunction::grad_log(double t, const Vector& y) const {
  return impl_->checked(t, y, true).grad_log;
}

Vector HFunction::grad(double t, const Vector& y) const {
  const HValue v = impl_->checked(t, y, true);
  return std::exp(v.log_h) * v.grad_log;
}

HValue HFunction::evaluate(double t, const Vector& y) const { return impl_->checked(t, y, true); }

double HFunction::standard_error(double t, const Vector& y) const {
  if (impl_->kind != Kind::weak || impl_->mc_nodes.size() == 0) return 0.0;
  if (!(t < impl_->horizon)) throw TimeError("h evaluated at or beyond the horizon");
  return impl_->monte_carlo(t, y).second;
}

double HFunction::log_terminal(const Vector& y) const {
  switch (impl_->kind) {
    case Kind::weak: {
      const double v = impl_->weak.density(y);
      return v > 0.0 ? std::log(v) : kNegInf;
    }
    case Kind::indicator:
      return impl_->region->contains(y) && impl_->model->spec.domain.contains(y) ? 0.0 : kNegInf;
    default:
      throw ParamError("terminal density is only defined for weak and indicator conditioning");
  }
}

BridgeProcess BridgeProcess::make(ModelPtr model, HFunction h, double start_time, Vector start) {
  if (!model) throw ParamError("bridge: model required");
  if (start.size() != model->dim()) throw ParamError("bridge: start dimension mismatch");
  if (!(start_time < h.horizon())) throw TimeError("bridge: start time must precede the horizon");
  if (!model->spec.domain.contains(start)) throw DomainError("bridge: start outside the domain");
  try {
    (void)h.log_value(start_time, start);
  } catch (const HFloorError& e) {
    throw ParamError(std::string("bridge: h(s, x) is not positive: ") + e.what());
  }
  return {std::move(model), std::move(h), start_time, std::move(start)};
}

Vector bridge_drift(const BridgeProcess& bp, double t, const Vector& y) {
  const auto& spec = bp.spec();
  if (!spec.domain.interior(y)) throw DomainError("bridge drift: state not in the domain interior");
  const HValue hv = bp.h.evaluate(t, y);
  const Vector drift = spec.drift(t, y) + diffusion_matrix(spec.dispersion(t, y)) * hv.grad_log;
  if (!drift.allFinite()) {
    std::ostringstream os;
    os << "bridge drift is not finite at t=" << t << ", y=" << y.transpose()
       << ", log h=" << hv.log_h << ", grad log h=" << hv.grad_log.transpose();
    throw NumericsError(os.str());
  }
  return drift;
}

double h_transform_transition(const HFunction& h, double s, double t, const Vector& x,
                              const Region& region) {
  if (!(s < t)) throw TimeError("h-transform transition needs s < t");
  if (!(t < h.horizon())) throw TimeError("h-transform transition needs t < T*");
  const ModelPtr& model = h.model();
  if (!model) throw ParamError("h-transform transition needs a density model");
  const int d = model->dim();
  if (d > 2) throw ParamError("h-transform transition: quadrature supports d <= 2");
  Region r = region;
  for (int i = 0; i < d; ++i) r.lo(i) = std::max(r.lo(i), model->spec.domain.lower(i));
  const double log_hx = h.log_value(s, x);

  // Breakpoints where the kernel mass sits: the start, the target, and the
  // Brownian-bridge-like centre with its spread.
  const Matrix a = diffusion_matrix(model->spec.dispersion(s, x));
  std::vector<std::vector<double>> cuts(static_cast<std::size_t>(d));
  const double T = h.horizon();
  for (int i = 0; i < d; ++i) {
    auto& c = cuts[static_cast<std::size_t>(i)];
    double centre = x(i);
    double spread = std::sqrt(std::max(a(i, i), 1e-300) * (t - s));
    if (h.target() && std::isfinite(T)) {
      const double z = (*h.target())(i);
      centre = x(i) + (z - x(i)) * (t - s) / (T - s);
      spread = std::sqrt(std::max(a(i, i), 1e-300) * (t - s) * (T - t) / (T - s));
      c.push_back(z);
    }
    c.push_back(x(i));
    for (double k : {-30.0, -10.0, -4.0, -1.0, 0.0, 1.0, 4.0, 10.0, 30.0}) c.push_back(centre + k * spread);
  }
  auto integrand = [&](const Vector& y) {
    double log_hy;
    try {
      log_hy = h.log_value(t, y);
    } catch (const HFloorError&) {
      return 0.0;
    }
    const double lp = model->log_density(s, t, x, y) + model->measure.log_weight_at(y);
    return std::exp(log_hy + lp - log_hx);
  };
  return integrate_box(integrand, r.lo, r.hi, cuts, QuadOptions{1e-13, 1e-10, 4000});
}

WeakMass weak_normalization(const HFunction& h, double s, const Vector& x) {
  if (h.kind() != HFunction::Kind::weak) throw ParamError("weak_normalization needs weak conditioning");
  return {h.value(s, x), h.standard_error(s, x)};
}

}  // namespace bridgesim
