#include "bridgesim/models.hpp"

#include <cmath>
#include <limits>

#include "bridgesim/errors.hpp"
#include "bridgesim/gaussian.hpp"
#include "bridgesim/special.hpp"

namespace bridgesim {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double ou_variance(double theta, double sigma, double tau) {
  if (theta == 0.0) return sigma * sigma * tau;
  return sigma * sigma * (-std::expm1(-2.0 * theta * tau)) / (2.0 * theta);
}

}  // namespace

ModelPtr brownian_model(const BrownianParams& p) {
  if (p.dim < 1 || p.dim > kMaxDim) throw ParamError("brownian: dimension out of range");
  if (!(p.sigma > 0.0)) throw ParamError("brownian: sigma must be positive");
  const Vector mu = p.drift.size() == 0 ? Vector::Zero(p.dim) : p.drift;
  if (mu.size() != p.dim) throw ParamError("brownian: drift has the wrong dimension");
  const double s2 = p.sigma * p.sigma;
  const int d = p.dim;

  auto model = std::make_shared<DensityModel>();
  model->name = "brownian";
  model->spec.dim = d;
  model->spec.drift = [mu](double, const Vector&) { return mu; };
  model->spec.dispersion = [d, sigma = p.sigma](double, const Vector&) {
    return Matrix(Matrix::Identity(d, d) * sigma);
  };
  model->spec.domain = DomainBox::whole(d);
  model->log_density = [mu, s2, d](double s, double t, const Vector& x, const Vector& y) {
    const double tau = t - s;
    const Vector r = y - x - mu * tau;
    return -0.5 * d * std::log(2.0 * M_PI * s2 * tau) - r.squaredNorm() / (2.0 * s2 * tau);
  };
  model->grad_log_x = [mu, s2](double s, double t, const Vector& x, const Vector& y) {
    const double tau = t - s;
    return Vector((y - x - mu * tau) / (s2 * tau));
  };
  model->moments = [mu, s2, d](double s, double t, const Vector& x) {
    const double tau = t - s;
    return GaussianMoments{x + mu * tau, Matrix::Identity(d, d) * (s2 * tau),
                           Matrix::Identity(d, d)};
  };
  model->sample = [mu, sigma = p.sigma](double s, double t, const Vector& x, const Vector& xi) {
    const double tau = t - s;
    return Vector(x + mu * tau + sigma * std::sqrt(tau) * xi);
  };
  return model;
}

ModelPtr ou_model(const OuParams& p) {
  if (!std::isfinite(p.theta) || !std::isfinite(p.mean))
    throw ParamError("ou: theta and mean must be finite");
  if (!(p.sigma > 0.0)) throw ParamError("ou: sigma must be positive");
  const double theta = p.theta;
  const double mean = p.mean;
  const double sigma = p.sigma;

  auto model = std::make_shared<DensityModel>();
  model->name = "ou";
  model->spec.dim = 1;
  model->spec.drift = [theta, mean](double, const Vector& x) {
    return scalar_state(theta * (mean - x(0)));
  };
  model->spec.dispersion = [sigma](double, const Vector&) { return Matrix::Constant(1, 1, sigma); };
  model->spec.domain = DomainBox::whole(1);
  model->log_density = [=](double s, double t, const Vector& x, const Vector& y) {
    const double tau = t - s;
    const double m = mean + (x(0) - mean) * std::exp(-theta * tau);
    const double v = ou_variance(theta, sigma, tau);
    const double r = y(0) - m;
    return -0.5 * std::log(2.0 * M_PI * v) - r * r / (2.0 * v);
  };
  model->grad_log_x = [=](double s, double t, const Vector& x, const Vector& y) {
    const double tau = t - s;
    const double e = std::exp(-theta * tau);
    const double m = mean + (x(0) - mean) * e;
    return scalar_state(e * (y(0) - m) / ou_variance(theta, sigma, tau));
  };
  model->moments = [=](double s, double t, const Vector& x) {
    const double tau = t - s;
    const double e = std::exp(-theta * tau);
    return GaussianMoments{scalar_state(mean + (x(0) - mean) * e),
                           Matrix::Constant(1, 1, ou_variance(theta, sigma, tau)),
                           Matrix::Constant(1, 1, e)};
  };
  model->sample = [=](double s, double t, const Vector& x, const Vector& xi) {
    const double tau = t - s;
    const double m = mean + (x(0) - mean) * std::exp(-theta * tau);
    return scalar_state(m + std::sqrt(ou_variance(theta, sigma, tau)) * xi(0));
  };
  return model;
}

ModelPtr bessel_model(const BesselParams& p) {
  if (!(p.dimension > 0.0) || !std::isfinite(p.dimension))
    throw ParamError("bessel: dimension must be positive");
  const double delta = p.dimension;
  const double nu = 0.5 * delta - 1.0;

  auto model = std::make_shared<DensityModel>();
  model->name = "bessel";
  model->spec.dim = 1;
  model->spec.drift = [delta](double, const Vector& x) {
    return scalar_state((delta - 1.0) / (2.0 * x(0)));
  };
  model->spec.dispersion = [](double, const Vector&) { return Matrix::Constant(1, 1, 1.0); };
  model->spec.domain = DomainBox::half_line(0.0);

  // Lebesgue density (y/t)(y/x)^nu exp(-(x^2+y^2)/2t) I_nu(xy/t), written through
  // the normalised series so that x = 0 (entrance) is covered.
  auto log_lebesgue = [nu](double tau, double x, double y) {
    if (y < 0.0 || x < 0.0) return kNegInf;
    if (y == 0.0) return 2.0 * nu + 1.0 > 0.0 ? kNegInf : std::numeric_limits<double>::infinity();
    return (2.0 * nu + 1.0) * std::log(y) - std::log(tau) - nu * std::log(2.0 * tau) +
           special::log_bessel_i_normalised(nu, x * y / tau) - (x * x + y * y) / (2.0 * tau);
  };
  if (p.speed_measure) {
    auto log_w = [delta](double y) { return std::log(2.0) + (delta - 1.0) * std::log(y); };
    model->measure = ReferenceMeasure::weighted(log_w);
    model->log_density = [log_lebesgue, log_w](double s, double t, const Vector& x,
                                                const Vector& y) {
      if (!(y(0) > 0.0)) return kNegInf;
      return log_lebesgue(t - s, x(0), y(0)) - log_w(y(0));
    };
  } else {
    model->log_density = [log_lebesgue](double s, double t, const Vector& x, const Vector& y) {
      return log_lebesgue(t - s, x(0), y(0));
    };
  }
  model->grad_log_x = [nu](double s, double t, const Vector& x, const Vector& y) {
    const double tau = t - s;
    return scalar_state(-x(0) / tau + y(0) / tau * special::bessel_i_ratio(nu, x(0) * y(0) / tau));
  };
  return model;
}

ModelPtr geometric_bm_model(const GeometricBmParams& p) {
  if (!(p.sigma > 0.0)) throw ParamError("geometric_bm: volatility must be positive");
  if (!std::isfinite(p.mu)) throw ParamError("geometric_bm: mu must be finite");
  const double mu = p.mu;
  const double sigma = p.sigma;
  const double shift = mu - 0.5 * sigma * sigma;

  auto model = std::make_shared<DensityModel>();
  model->name = "geometric_bm";
  model->spec.dim = 1;
  model->spec.drift = [mu](double, const Vector& x) { return scalar_state(mu * x(0)); };
  model->spec.dispersion = [sigma](double, const Vector& x) {
    return Matrix::Constant(1, 1, sigma * x(0));
  };
  model->spec.domain = DomainBox::half_line(0.0);
  model->log_density = [=](double s, double t, const Vector& x, const Vector& y) {
    if (!(y(0) > 0.0) || !(x(0) > 0.0)) return kNegInf;
    const double sd = sigma * std::sqrt(t - s);
    const double u = (std::log(y(0) / x(0)) - shift * (t - s)) / sd;
    return special::log_normal_pdf(u) - std::log(y(0) * sd);
  };
  model->grad_log_x = [=](double s, double t, const Vector& x, const Vector& y) {
    const double sd = sigma * std::sqrt(t - s);
    const double u = (std::log(y(0) / x(0)) - shift * (t - s)) / sd;
    return scalar_state(u / (sd * x(0)));
  };
  model->sample = [=](double s, double t, const Vector& x, const Vector& xi) {
    const double tau = t - s;
    return scalar_state(x(0) * std::exp(shift * tau + sigma * std::sqrt(tau) * xi(0)));
  };
  return model;
}

ModelPtr linear_gaussian_model(const LinearGaussianParams& p) {
  const auto d = p.sigma.rows();
  if (d < 1 || p.sigma.cols() != d || p.gamma.rows() != d || p.gamma.cols() != d ||
      p.b.size() != d)
    throw ParamError("linear_gaussian: coefficient shapes disagree");
  if (!(p.horizon > 0.0)) throw ParamError("linear_gaussian: horizon must be positive");
  auto sde = LinearSDE::constant(p.sigma, p.b, p.gamma, p.horizon);
  return gaussian_density_model(std::make_shared<const FundamentalSolution>(std::move(sde)));
}

ModelPtr builtin_model(BuiltinModel name, const ModelParams& params) {
  auto expect = [&](auto* tag) -> const auto& {
    using T = std::remove_pointer_t<decltype(tag)>;
    if (!std::holds_alternative<T>(params))
      throw ParamError("parameters do not match model '" + std::string(to_string(name)) + "'");
    return std::get<T>(params);
  };
  switch (name) {
    case BuiltinModel::brownian:
      return brownian_model(expect(static_cast<BrownianParams*>(nullptr)));
    case BuiltinModel::linear_gaussian:
      return linear_gaussian_model(expect(static_cast<LinearGaussianParams*>(nullptr)));
    case BuiltinModel::ou:
      return ou_model(expect(static_cast<OuParams*>(nullptr)));
    case BuiltinModel::bessel:
      return bessel_model(expect(static_cast<BesselParams*>(nullptr)));
    case BuiltinModel::geometric_bm:
      return geometric_bm_model(expect(static_cast<GeometricBmParams*>(nullptr)));
  }
  throw ParamError("unknown model");
}

BuiltinModel parse_builtin_model(std::string_view name) {
  if (name == "brownian") return BuiltinModel::brownian;
  if (name == "linear_gaussian") return BuiltinModel::linear_gaussian;
  if (name == "ou") return BuiltinModel::ou;
  if (name == "bessel") return BuiltinModel::bessel;
  if (name == "geometric_bm") return BuiltinModel::geometric_bm;
  throw ParamError("unknown model '" + std::string(name) + "'");
}

std::string_view to_string(BuiltinModel name) {
  switch (name) {
    case BuiltinModel::brownian: return "brownian";
    case BuiltinModel::linear_gaussian: return "linear_gaussian";
    case BuiltinModel::ou: return "ou";
    case BuiltinModel::bessel: return "bessel";
    case BuiltinModel::geometric_bm: return "geometric_bm";
  }
  return "unknown";
}

}  // namespace bridgesim
