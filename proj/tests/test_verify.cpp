#include <doctest.h>

#include <cmath>
#include <random>

#include "bridgesim/errors.hpp"
#include "bridgesim/models.hpp"
#include "bridgesim/verify.hpp"
#include "oracles.hpp"

using namespace bridgesim;

namespace {
Vector v1(double x) { return scalar_state(x); }
}

TEST_CASE("Chapman-Kolmogorov for Brownian, OU and Bessel(3)") {
  auto bm = brownian_model({});
  auto ou = ou_model({1.0, 0.0, 1.0});
  auto b3 = bessel_model({3.0, false});
  CHECK(chapman_kolmogorov_check(*bm, 0.3, 0.7, v1(0.0), v1(0.5)).pass);
  CHECK(chapman_kolmogorov_check(*ou, 0.2, 1.0, v1(1.0), v1(-0.4)).pass);
  auto r = chapman_kolmogorov_check(*b3, 0.5, 1.0, v1(1.0), v1(1.5));
  CHECK(r.pass);
  CHECK(r.name == "chapman_kolmogorov");
}

TEST_CASE("dual limit decays for Brownian motion") {
  auto bm = brownian_model({});
  auto r = dual_limit_check(*bm, 0.0, 0.0, 0.5, 0.4);
  CHECK(r.pass);
}

TEST_CASE("density sup is finite and stable") {
  auto bm = brownian_model({});
  auto r = density_sup_check(*bm, 0.0, 0.5, 1.0);
  CHECK(r.pass);
}

TEST_CASE("potential density matches the Brownian resolvent") {
  auto bm = brownian_model({});
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> la(-1.0, 4.0), pos(-2.0, 2.0);
  for (int i = 0; i < 20; ++i) {
    const double alpha = std::pow(10.0, la(rng));
    const double x = pos(rng), y = pos(rng);
    auto u = potential_density(*bm, alpha, v1(x), v1(y));
    CAPTURE(alpha);
    CHECK_FALSE(u.infinite);
    CHECK(u.value == doctest::Approx(oracle::brownian_resolvent(alpha, x, y)).epsilon(1e-6));
  }
}

TEST_CASE("bounded potential on a set away from y") {
  auto bm = brownian_model({});
  CHECK(bounded_potential_check(*bm, 0.0, 1.0, 2.0).pass);
  CHECK_THROWS_AS(bounded_potential_check(*bm, 1.5, 1.0, 2.0), ParamError);
}

TEST_CASE("martingale check: h = 1 gives mean exactly 1") {
  auto bm = brownian_model({});
  MartingaleOptions o;
  o.n_paths = 200;
  o.threads = 1;
  double ts[] = {0.5};
  auto r = martingale_check(HFunction::one(bm, 1.0), 0.0, v1(0.0), ts, o);
  CHECK(r.pass);
  CHECK(r.statistics["per_time"][0]["mean"].get<double>() == 1.0);
}

TEST_CASE("martingale check for Brownian and OU strong h") {
  MartingaleOptions o;
  o.n_paths = 10000;
  o.threads = 1;
  double ts[] = {0.25, 0.5, 0.9};
  auto bm = brownian_model({});
  CHECK(martingale_check(HFunction::strong(bm, 1.0, v1(0.3)), 0.0, v1(0.0), ts, o).pass);
  auto ou = ou_model({1.0, 0.0, 1.0});
  CHECK(martingale_check(HFunction::strong(ou, 1.0, v1(0.5)), 0.0, v1(-0.2), ts, o).pass);
}

TEST_CASE("terminal law check") {
  auto bm = brownian_model({});
  auto h = HFunction::indicator(bm, 1.0, Region::interval(1.0, INFINITY));
  auto bp = BridgeProcess::make(bm, h, 0.0, v1(0.0));
  EnsembleOptions o;
  o.threads = 1;
  o.stride = 1000;
  auto ens = simulate_ensemble(bp, TimeGrid::geometric(0.0, 1.0, 500, 2.0, 1e-4), 2000, 3, o);
  CHECK(terminal_law_check(ens, h).pass);
  auto strong = HFunction::strong(bm, 1.0, v1(0.0));
  CHECK_THROWS_AS(terminal_law_check(ens, strong), ParamError);
  auto few = simulate_ensemble(bp, TimeGrid::geometric(0.0, 1.0, 50, 2.0, 1e-4), 50, 3, o);
  CHECK_THROWS_AS(terminal_law_check(few, h), SampleSizeError);
}

TEST_CASE("bridge hit fraction and tolerance") {
  auto bm = brownian_model({});
  auto bp = BridgeProcess::make(bm, HFunction::strong(bm, 1.0, v1(0.0)), 0.0, v1(0.0));
  EnsembleOptions o;
  o.threads = 1;
  o.stride = 100;
  auto ens = simulate_ensemble(bp, TimeGrid::geometric(0.0, 1.0, 200, 2.0, 1e-4), 200, 8, o);
  auto r = bridge_hit_check(ens, v1(0.0));
  CHECK(r.pass);
  CHECK(bridge_hit_check(ens, v1(0.0), INFINITY).statistics["fraction"].get<double>() == 1.0);
}

TEST_CASE("local martingale residual vanishes for constants") {
  auto bm = brownian_model({});
  auto bp = BridgeProcess::make(bm, HFunction::one(bm, 1.0), 0.0, v1(0.0));
  EnsembleOptions o;
  o.threads = 1;
  auto ens = simulate_ensemble(bp, TimeGrid::uniform(0.0, 1.0, 50, 1e-3), 200, 2, o);
  TestFunction f{[](double, const Vector&) { return 3.0; },
                 [](double, const Vector&) { return Vector(Vector::Zero(1)); },
                 [](double, const Vector&) { return Matrix(Matrix::Zero(1, 1)); },
                 [](double, const Vector&) { return 0.0; }};
  auto r = local_martingale_residual(*bm, f, ens, 0.5);
  CHECK(r.pass);
  CHECK(r.statistics["mean"].get<double>() == 0.0);
}

TEST_CASE("Laplace limits") {
  auto lin = [](double, double s) { return s; };
  auto r = laplace_limit_check(lin, LaplaceMode::a_i);
  CHECK(r.pass);
  // alpha int_0^t e^{-alpha s} s ds -> 0 like 1/alpha.
  CHECK(laplace_transform_mean([](double s) { return s; }, 1e3, 1.0) ==
        doctest::Approx(oracle::laplace_of_identity(1e3, 1.0)).epsilon(1e-8));
  CHECK(laplace_limit_check(lin, LaplaceMode::a_ii).pass);
  auto capped = [](double t, double s) { return std::min(1.0, s / t); };
  CHECK(laplace_limit_check(capped, LaplaceMode::b).pass);
}

TEST_CASE("strong-solution preconditions probe") {
  auto bm = brownian_model({});
  PreconditionOptions o;
  for (double x = -2.0; x <= 2.0; x += 0.5) o.probe_grid.push_back(v1(x));
  o.start = v1(0.0);
  o.n_paths = 100;
  o.steps = 100;
  o.threads = 1;
  auto h = HFunction::strong(bm, 1.0, v1(0.0));
  auto r = strong_solution_preconditions(bm, &h, o);
  CHECK_FALSE(r.notes.empty());
  CHECK(to_json(r)["check"] == r.name);
}
