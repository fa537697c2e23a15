#include <doctest.h>

#include <cmath>
#include <random>

#include "bridgesim/errors.hpp"
#include "bridgesim/models.hpp"
#include "bridgesim/rng.hpp"
#include "oracles.hpp"

using namespace bridgesim;

namespace {
Vector v1(double x) { return scalar_state(x); }
}  // namespace

TEST_CASE("domain box membership and projection") {
  auto half = DomainBox::half_line(0.0);
  CHECK(half.contains(v1(0.0)));
  CHECK_FALSE(half.interior(v1(0.0)));
  Vector x = v1(-0.5);
  CHECK(half.project_interior(x, 1e-12));
  CHECK(x(0) == 1e-12);
  Vector y = v1(3.0);
  CHECK_FALSE(half.project_interior(y, 1e-12));
  CHECK(DomainBox::whole(2).interior(Vector::Constant(2, -1e300)));
}

TEST_CASE("diffusion matrix is symmetric and domain-checked") {
  auto m = bessel_model({});
  Matrix a = a_matrix(m->spec, 0.0, v1(1.0));
  CHECK(a(0, 0) == 1.0);
  CHECK_THROWS_AS(a_matrix(m->spec, 0.0, v1(-1.0)), DomainError);
  Matrix s(2, 2);
  s << 1.0, 2.0, 0.0, 3.0;
  Matrix aa = diffusion_matrix(s);
  CHECK(aa(0, 1) == aa(1, 0));
  CHECK(aa(0, 0) == 5.0);
}

TEST_CASE("closed-form densities match independent formulas") {
  auto bm = brownian_model({});
  auto ou = ou_model({0.7, 0.4, 1.3});
  auto b3 = bessel_model({3.0, false});
  auto b25 = bessel_model({2.5, false});
  auto gbm = geometric_bm_model({0.1, 0.4});
  for (double t : {0.01, 0.3, 2.0})
    for (double x : {0.2, 1.0, 3.0})
      for (double y : {0.1, 0.9, 4.0}) {
        CHECK(eval_density(*bm, t, v1(x), v1(y)) ==
              doctest::Approx(oracle::normal_pdf(y, x, t)).epsilon(1e-12));
        CHECK(eval_density(*ou, t, v1(x), v1(y)) ==
              doctest::Approx(oracle::ou_density(t, x, y, 0.7, 0.4, 1.3)).epsilon(1e-12));
        CHECK(eval_density(*b3, t, v1(x), v1(y)) ==
              doctest::Approx(oracle::bessel3_density(t, x, y)).epsilon(1e-10));
        if (x * y / t < 500)
          CHECK(eval_density(*b25, t, v1(x), v1(y)) ==
                doctest::Approx(oracle::bessel_density(2.5, t, x, y)).epsilon(1e-10));
        const double mu = 0.1, s = 0.4;
        const double lm = std::log(x) + (mu - 0.5 * s * s) * t;
        CHECK(eval_density(*gbm, t, v1(x), v1(y)) ==
              doctest::Approx(oracle::normal_pdf(std::log(y), lm, s * s * t) / y).epsilon(1e-12));
      }
}

TEST_CASE("densities integrate to one against their reference measure") {
  auto ou = ou_model({});
  auto bs = bessel_model({3.0, true});
  const double t = 0.4, x = 0.8;
  double m_ou = oracle::simpson([&](double y) { return eval_density(*ou, t, v1(x), v1(y)); }, -10, 10);
  CHECK(m_ou == doctest::Approx(1.0).epsilon(1e-10));
  double m_bs = oracle::simpson(
      [&](double y) {
        return y <= 0 ? 0.0 : eval_density(*bs, t, v1(x), v1(y)) * 2.0 * y * y;
      },
      0.0, 12.0);
  CHECK(m_bs == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("speed-measure density times the weight is the Lebesgue density") {
  auto leb = bessel_model({3.0, false});
  auto spd = bessel_model({3.0, true});
  for (double y : {0.3, 1.0, 2.5}) {
    double w = std::exp(spd->measure.log_weight_at(v1(y)));
    CHECK(eval_density(*spd, 0.5, v1(1.0), v1(y)) * w ==
          doctest::Approx(eval_density(*leb, 0.5, v1(1.0), v1(y))).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients agree with central differences") {
  std::vector<ModelPtr> models{brownian_model({}), ou_model({1.5, -0.2, 0.8}),
                               bessel_model({3.0, false}), bessel_model({4.5, true}),
                               geometric_bm_model({0.05, 0.3})};
  for (const auto& m : models) {
    for (double x : {0.4, 1.1, 2.0}) {
      const double y = 1.3, t = 0.6;
      double fd = oracle::derivative(
          [&](double xx) { return eval_log_density(*m, t, v1(xx), v1(y)); }, x, 1e-4);
      CAPTURE(m->name);
      CHECK(eval_grad_log(*m, t, v1(x), v1(y))(0) == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("time arguments are validated") {
  auto bm = brownian_model({});
  CHECK_THROWS_AS(eval_density(*bm, 0.0, v1(0), v1(0)), TimeError);
  CHECK_THROWS_AS(transition_density(*bm, 1.0, 0.5, v1(0), v1(0)), TimeError);
  CHECK_THROWS_AS(brownian_model({0, {}, 1.0}), ParamError);
  CHECK_THROWS_AS(builtin_model(BuiltinModel::ou, BesselParams{}), ParamError);
  CHECK(parse_builtin_model("bessel") == BuiltinModel::bessel);
  CHECK_THROWS_AS(parse_builtin_model("heston"), ParamError);
}

TEST_CASE("exact OU sampler reproduces the transition moments") {
  auto ou = ou_model({2.0, 1.0, 0.5});
  Engine eng(11);
  const int n = 20000;
  const double t = 0.3, x = -1.0;
  double s1 = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    double v = ou->sample(0.0, t, v1(x), standard_normal(eng, 1))(0);
    s1 += v;
    s2 += v * v;
  }
  const double mean = 1.0 + (x - 1.0) * std::exp(-2.0 * t);
  const double var = 0.25 * (1 - std::exp(-4.0 * t)) / 4.0;
  const double m = s1 / n, vv = s2 / n - m * m;
  CHECK(std::abs(m - mean) < 4 * std::sqrt(var / n));
  CHECK(std::abs(vv - var) < 4 * var * std::sqrt(2.0 / n));
}
