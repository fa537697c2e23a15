#include "bridgesim/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <Eigen/Eigenvalues>

#include "bridgesim/errors.hpp"

namespace bridgesim {

LinearSDE LinearSDE::constant(Matrix sigma, Vector b, Matrix gamma, double horizon) {
  LinearSDE sde;
  sde.dim = static_cast<int>(sigma.rows());
  sde.sigma = [sigma](double) { return sigma; };
  sde.b = [b](double) { return b; };
  sde.gamma = [gamma](double) { return gamma; };
  sde.horizon = horizon;
  return sde;
}

double ellipticity_constant(const LinearSDE& sde, int probes) {
  double c = std::numeric_limits<double>::infinity();
  for (int i = 0; i < probes; ++i) {
    const double t = sde.horizon * i / std::max(1, probes - 1);
    const Matrix a = diffusion_matrix(sde.sigma(t));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
    c = std::min(c, eig.eigenvalues().minCoeff());
  }
  return c;
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

// Layout of the augmented state for dimension d.
struct Layout {
  int d;
  int inv() const { return 0; }
  int drift() const { return d * d; }
  int cov() const { return d * d + d; }
  int size() const { return 2 * d * d + d; }
};

}  // namespace

FundamentalSolution::FundamentalSolution(LinearSDE sde, OdeOptions opts)
    : sde_(std::move(sde)), opts_(opts) {
  const int d = sde_.dim;
  if (d < 1 || d > kMaxDim) throw ParamError("linear SDE: dimension out of range");
  if (!(sde_.horizon > 0.0)) throw ParamError("linear SDE: horizon must be positive");
  // March F^-1 across [0, T*] once, keeping a checkpoint at every accepted step.
  State y = State::Zero(Layout{d}.size());
  Eigen::Map<Eigen::MatrixXd>(y.data(), d, d).setIdentity();
  checkpoint_times_.push_back(0.0);
  checkpoints_.push_back(y.head(d * d));
  const int pieces = 64;
  for (int i = 0; i < pieces; ++i) {
    const double from = sde_.horizon * i / pieces;
    const double to = sde_.horizon * (i + 1) / pieces;
    y = advance(from, to, y);
    checkpoint_times_.push_back(to);
    checkpoints_.push_back(y.head(d * d));
  }
}

FundamentalSolution::State FundamentalSolution::rhs(double t, const State& y) const {
  const int d = sde_.dim;
  const Layout L{d};
  State dy(L.size());
  Eigen::Map<const Eigen::MatrixXd> inv(y.data(), d, d);
  const Eigen::MatrixXd gamma = sde_.gamma(t);
  const Eigen::VectorXd b = sde_.b(t);
  const Eigen::MatrixXd sigma = sde_.sigma(t);
  Eigen::Map<Eigen::MatrixXd>(dy.data(), d, d) = -inv * gamma;
  dy.segment(L.drift(), d) = inv * b;
  const Eigen::MatrixXd g = inv * sigma;
  Eigen::Map<Eigen::MatrixXd>(dy.data() + L.cov(), d, d) = g * g.transpose();
  return dy;
}

FundamentalSolution::State FundamentalSolution::advance(double from, double to, State y) const {
  if (to == from) return y;
  const double span = to - from;
  double h = span;
  double t = from;
  int steps = 0;
  while (t < to) {
    if (t + h > to) h = to - t;
    const State k1 = rhs(t, y);
    const State k2 = rhs(t + c2 * h, y + h * (a21 * k1));
    const State k3 = rhs(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
    const State k4 = rhs(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const State k5 = rhs(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const State k6 =
        rhs(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const State next = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const State k7 = rhs(t + h, next);
    const State err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double norm = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double scale =
          opts_.abs_tol + opts_.rel_tol * std::max(std::abs(y(i)), std::abs(next(i)));
      norm = std::max(norm, std::abs(err(i)) / scale);
    }
    if (!std::isfinite(norm)) throw NumericsError("fundamental matrix ODE produced non-finite values");
    if (norm <= 1.0) {
      t = (h == to - t) ? to : t + h;
      y = next;
    }
    const double factor = norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(norm, -0.2), 0.2, 5.0);
    h *= factor;
    if (h < 1e-14 * std::abs(span) || ++steps > 1000000)
      throw NumericsError("fundamental matrix ODE step size collapsed");
  }
  return y;
}

FundamentalSolution::State FundamentalSolution::inverse_at(double t) const {
  if (t < -1e-12 || t > sde_.horizon * (1.0 + 1e-12))
    throw TimeError("fundamental matrix evaluated outside [0, T*]");
  t = std::clamp(t, 0.0, sde_.horizon);
  const auto it = std::upper_bound(checkpoint_times_.begin(), checkpoint_times_.end(), t);
  const std::size_t idx = static_cast<std::size_t>(it - checkpoint_times_.begin()) - 1;
  const int d = sde_.dim;
  if (checkpoint_times_[idx] == t) return checkpoints_[idx];
  State y = State::Zero(Layout{d}.size());
  y.head(d * d) = checkpoints_[idx];
  return advance(checkpoint_times_[idx], t, y).head(d * d);
}

FundamentalMatrix FundamentalSolution::at(double t) const {
  const int d = sde_.dim;
  const State inv = inverse_at(t);
  const Matrix f_inv = Eigen::Map<const Eigen::MatrixXd>(inv.data(), d, d);
  return {Matrix(f_inv.partialPivLu().inverse()), f_inv};
}

MeanCov FundamentalSolution::moments(double s, double t) const {
  const auto key = std::make_pair(s, t);
  {
    std::shared_lock lock(memo_mutex_);
    const auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
  }
  if (!(s <= t)) throw TimeError("moments need s <= t");
  const int d = sde_.dim;
  const Layout L{d};
  // Integrate the increments over [s, t] directly so short intervals keep
  // full relative accuracy in Sigma(s, t).
  State y = State::Zero(L.size());
  const State inv_s = inverse_at(s);
  y.head(d * d) = inv_s;
  y = advance(s, t, y);
  const Matrix f_inv_s = Eigen::Map<const Eigen::MatrixXd>(inv_s.data(), d, d);
  const Matrix f_inv_t = Eigen::Map<const Eigen::MatrixXd>(y.data(), d, d);
  const Matrix f_t = f_inv_t.partialPivLu().inverse();
  const Vector drift_int = y.segment(L.drift(), d);
  const Matrix cov_int = Eigen::Map<const Eigen::MatrixXd>(y.data() + L.cov(), d, d);
  MeanCov mc;
  mc.jacobian = f_t * f_inv_s;
  mc.shift = f_t * drift_int;
  const Matrix cov = f_t * cov_int * f_t.transpose();
  mc.cov = 0.5 * (cov + cov.transpose());
  {
    std::unique_lock lock(memo_mutex_);
    if (memo_.size() > 200000) memo_.clear();
    memo_.emplace(key, mc);
  }
  return mc;
}

FundamentalMatrix fundamental_matrix(const FundamentalSolution& sol, double t) { return sol.at(t); }

Eigen::LLT<Matrix> factor_covariance(const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  const auto d = cov.rows();
  auto near_singular = [&] {
    if (llt.info() != Eigen::Success) return true;
    const auto diag = llt.matrixLLT().diagonal().cwiseAbs2();
    return diag.minCoeff() <= 1e-14 * diag.maxCoeff();
  };
  if (!near_singular()) return llt;
  const double trace = cov.trace();
  if (!(trace > 0.0)) throw SingularCovError("covariance is singular (zero trace)");
  llt.compute(cov + Matrix::Identity(d, d) * (1e-12 * trace / d));
  if (llt.info() != Eigen::Success) throw SingularCovError("covariance is not positive definite");
  return llt;
}

namespace {

double gaussian_log_pdf(const Eigen::LLT<Matrix>& llt, const Vector& r) {
  const auto d = r.size();
  const Vector w = llt.matrixL().solve(r);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (d * std::log(2.0 * M_PI) + log_det + w.squaredNorm());
}

}  // namespace

ModelPtr gaussian_density_model(std::shared_ptr<const FundamentalSolution> sol) {
  const int d = sol->dim();
  auto model = std::make_shared<DensityModel>();
  model->name = "linear_gaussian";
  model->homogeneous = false;
  model->spec.dim = d;
  model->spec.drift = [sol](double t, const Vector& x) {
    const auto& sde = sol->sde();
    return Vector(sde.b(t) + sde.gamma(t) * x);
  };
  model->spec.dispersion = [sol](double t, const Vector&) { return sol->sde().sigma(t); };
  model->spec.domain = DomainBox::whole(d);
  model->log_density = [sol](double s, double t, const Vector& x, const Vector& y) {
    const MeanCov mc = sol->moments(s, t);
    return gaussian_log_pdf(factor_covariance(mc.cov), y - mc.mean(x));
  };
  model->grad_log_x = [sol](double s, double t, const Vector& x, const Vector& y) {
    const MeanCov mc = sol->moments(s, t);
    return Vector(mc.jacobian.transpose() * factor_covariance(mc.cov).solve(y - mc.mean(x)));
  };
  model->moments = [sol](double s, double t, const Vector& x) {
    const MeanCov mc = sol->moments(s, t);
    return GaussianMoments{mc.mean(x), mc.cov, mc.jacobian};
  };
  model->sample = [sol](double s, double t, const Vector& x, const Vector& xi) {
    const MeanCov mc = sol->moments(s, t);
    return Vector(mc.mean(x) + factor_covariance(mc.cov).matrixL() * xi);
  };
  return model;
}

Vector gaussian_bridge_drift(const FundamentalSolution& sol, double s, const Vector& x,
                             const Vector& z) {
  const auto& sde = sol.sde();
  const double horizon = sol.horizon();
  if (!(s < horizon)) throw TimeError("gaussian bridge drift needs s < T*");
  const MeanCov mc = sol.moments(s, horizon);
  const Vector pull = mc.jacobian.transpose() * factor_covariance(mc.cov).solve(z - mc.mean(x));
  return sde.b(s) + sde.gamma(s) * x + diffusion_matrix(sde.sigma(s)) * pull;
}

}  // namespace bridgesim
