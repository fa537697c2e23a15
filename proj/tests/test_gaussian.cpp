#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "bridgesim/errors.hpp"
#include "bridgesim/gaussian.hpp"
#include "bridgesim/h_function.hpp"
#include "oracles.hpp"

using namespace bridgesim;

namespace {

LinearSDE rotating_sde() {
  Matrix sigma(2, 2), gamma(2, 2);
  sigma << 1.0, 0.0, 0.3, 0.8;
  gamma << -0.5, 1.0, -1.0, -0.2;
  Vector b(2);
  b << 0.4, -0.1;
  return LinearSDE::constant(sigma, b, gamma, 2.0);
}

}  // namespace

TEST_CASE("fundamental matrix and its inverse") {
  auto sde = rotating_sde();
  FundamentalSolution sol(sde);
  for (double t : {0.0, 0.1, 0.77, 1.5, 2.0}) {
    auto fm = sol.at(t);
    CHECK((fm.F * fm.F_inv - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::MatrixXd ref = (Eigen::MatrixXd(sde.gamma(0.0)) * t).exp();
    CHECK((Eigen::MatrixXd(fm.F) - ref).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("transition moments against Van Loan") {
  auto sde = rotating_sde();
  FundamentalSolution sol(sde);
  for (auto [s, t] : {std::pair{0.0, 1.0}, std::pair{0.3, 0.35}, std::pair{1.2, 2.0}}) {
    auto mc = sol.moments(s, t);
    auto ref = oracle::linear_moments(Eigen::MatrixXd(sde.sigma(0)), Eigen::VectorXd(sde.b(0)),
                                      Eigen::MatrixXd(sde.gamma(0)), t - s);
    CHECK((Eigen::MatrixXd(mc.jacobian) - ref.F).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((Eigen::VectorXd(mc.shift) - ref.shift).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((Eigen::MatrixXd(mc.cov) - ref.cov).cwiseAbs().maxCoeff() < 1e-10 * ref.cov.norm());
  }
}

TEST_CASE("bridge drift sign: FD oracle of grad log p(T - s, x, z)") {
  auto sde = rotating_sde();
  auto sol = std::make_shared<const FundamentalSolution>(sde);
  const double s = 0.4, T = 2.0;
  Vector x(2), z(2);
  x << 0.3, -0.7;
  z << -0.2, 0.9;
  auto ref = oracle::linear_moments(Eigen::MatrixXd(sde.sigma(0)), Eigen::VectorXd(sde.b(0)),
                                    Eigen::MatrixXd(sde.gamma(0)), T - s);
  auto logp = [&](const Eigen::VectorXd& xx) {
    return oracle::log_gaussian(Eigen::VectorXd(z), ref.F * xx + ref.shift, ref.cov);
  };
  Eigen::VectorXd grad(2);
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
    e(i) = 1e-5;
    grad(i) = (logp(Eigen::VectorXd(x) + e) - logp(Eigen::VectorXd(x) - e)) / 2e-5;
  }
  Matrix sig = sde.sigma(s);
  Eigen::VectorXd expected = Eigen::VectorXd(sde.b(s) + sde.gamma(s) * x) +
                             Eigen::MatrixXd(sig * sig.transpose()) * grad;
  Vector drift = gaussian_bridge_drift(*sol, s, x, z);
  CHECK((Eigen::VectorXd(drift) - expected).cwiseAbs().maxCoeff() < 1e-7);
  // The displayed "- a Sigma^-1 (...)" variant points the wrong way.
  Vector wrong = sde.b(s) + sde.gamma(s) * x - (drift - sde.b(s) - sde.gamma(s) * x);
  CHECK((Eigen::VectorXd(wrong) - expected).norm() > 1.0);
}

TEST_CASE("Gaussian bridge drift equals the h-engine drift") {
  auto sde = rotating_sde();
  auto sol = std::make_shared<const FundamentalSolution>(sde);
  auto model = gaussian_density_model(sol);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.9), pos(-2.0, 2.0);
  Vector z(2);
  z << 0.5, -0.5;
  auto h = HFunction::strong(model, 2.0, z);
  Vector x0 = Vector::Zero(2);
  auto bp = BridgeProcess::make(model, h, 0.0, x0);
  for (int i = 0; i < 100; ++i) {
    Vector y(2);
    y << pos(rng), pos(rng);
    const double s = u(rng);
    Vector a = gaussian_bridge_drift(*sol, s, y, z);
    Vector b = bridge_drift(bp, s, y);
    CHECK((a - b).norm() <= 1e-8 * std::max(1.0, a.norm()));
  }
}

TEST_CASE("Brownian specialisation is exactly (z - x) / (T - s)") {
  auto sde = LinearSDE::constant(Matrix::Identity(1, 1), Vector::Zero(1), Matrix::Zero(1, 1), 1.0);
  FundamentalSolution sol(sde);
  for (double s : {0.0, 0.5, 0.99})
    CHECK(gaussian_bridge_drift(sol, s, scalar_state(0.2), scalar_state(-0.4))(0) ==
          doctest::Approx((-0.4 - 0.2) / (1.0 - s)).epsilon(1e-10));
}

TEST_CASE("covariance factorisation") {
  Matrix c(2, 2);
  c << 1.0, 1.0, 1.0, 1.0;
  auto llt = factor_covariance(c);
  CHECK(llt.info() == Eigen::Success);
  Matrix neg = -Matrix::Identity(2, 2);
  CHECK_THROWS_AS(factor_covariance(neg), SingularCovError);
}

TEST_CASE("ellipticity constant") {
  auto sde = LinearSDE::constant(Matrix::Identity(2, 2) * 0.5, Vector::Zero(2), Matrix::Zero(2, 2), 1.0);
  CHECK(ellipticity_constant(sde) == doctest::Approx(0.25));
}
