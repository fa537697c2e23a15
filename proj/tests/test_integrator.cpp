#include <doctest.h>

#include <cmath>
#include <sstream>

#include "bridgesim/errors.hpp"
#include "bridgesim/integrator.hpp"
#include "bridgesim/ks.hpp"
#include "bridgesim/models.hpp"
#include "oracles.hpp"

using namespace bridgesim;

namespace {
Vector v1(double x) { return scalar_state(x); }

BridgeProcess brownian_bridge(double z = 0.0) {
  auto bm = brownian_model({});
  return BridgeProcess::make(bm, HFunction::strong(bm, 1.0, v1(z)), 0.0, v1(0.0));
}
}  // namespace

TEST_CASE("geometric grid refines toward the horizon") {
  auto g = TimeGrid::geometric(0.0, 1.0, 100, 2.0, 1e-4);
  REQUIRE(g.nodes.size() == 101);
  CHECK(g.nodes.front() == 0.0);
  CHECK(g.nodes.back() == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
  CHECK(g.delta_min() == doctest::Approx(1e-4));
  for (int k = 0; k <= 100; ++k)
    CHECK(1.0 - g.nodes[k] == doctest::Approx(1e-4 + (1.0 - 1e-4) * std::pow(1.0 - k / 100.0, 2.0)));
  CHECK(g.nodes[100] - g.nodes[99] < g.nodes[1] - g.nodes[0]);
}

TEST_CASE("grid construction details") {
  double req[] = {0.25, 0.5};
  auto g = TimeGrid::uniform(0.0, 1.0, 7, 1e-3, req);
  CHECK(g.nodes[g.nearest(0.25)] == 0.25);
  CHECK(g.nodes[g.nearest(0.5)] == 0.5);
  CHECK(std::is_sorted(g.nodes.begin(), g.nodes.end()));
  CHECK(TimeGrid::single(0.0, 1.0).nodes.size() == 1);
  CHECK(TimeGrid::closed(0.0, 2.0, 4).nodes.back() == 2.0);
  CHECK_THROWS_AS(TimeGrid::geometric(1.0, 1.0, 10, 2.0, 1e-4), TimeError);
  CHECK_THROWS_AS(TimeGrid::geometric(0.0, 1.0, 10, 2.0, 2.0), ParamError);
  auto plan = record_plan(TimeGrid::standard(0.0, 1.0), 500, req);
  CHECK(plan.front() == 0);
  CHECK(plan.back() == 2000);
}

TEST_CASE("degenerate grid returns only the start") {
  auto p = euler_maruyama(brownian_bridge(), TimeGrid::single(0.0, 1.0), 1);
  CHECK(p.states.cols() == 1);
  CHECK(p.states(0, 0) == 0.0);
}

TEST_CASE("exact Brownian bridge pins and has the right marginal variance") {
  auto grid = TimeGrid::uniform(0.0, 1.0, 4, 1e-4);
  double s1 = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto p = exact_brownian_bridge(v1(0.0), v1(1.0), 1.0, grid, 100 + i);
    CHECK(p.terminal.has_value());
    const double x = p.states(0, 2) - grid.nodes[2];
    s1 += x;
    s2 += x * x;
  }
  const double t = grid.nodes[2];
  const double var = t * (1 - t);
  CHECK(std::abs(s1 / n) < 4 * std::sqrt(var / n));
  CHECK(std::abs(s2 / n - var) < 4 * var * std::sqrt(2.0 / n));
}

TEST_CASE("ensembles are bit-identical across thread counts") {
  auto bp = brownian_bridge(0.3);
  auto grid = TimeGrid::geometric(0.0, 1.0, 200, 2.0, 1e-4);
  EnsembleOptions o1, o4;
  o1.threads = 1;
  o4.threads = 4;
  auto a = simulate_ensemble(bp, grid, 64, 99, o1);
  auto b = simulate_ensemble(bp, grid, 64, 99, o4);
  for (std::size_t i = 0; i < 64; ++i) CHECK((a.paths[i].states.array() == b.paths[i].states.array()).all());
  auto c = simulate_ensemble(bp, grid, 64, 100, o1);
  CHECK((a.paths[0].states.array() != c.paths[0].states.array()).any());
}

TEST_CASE("HFloorError paths are resampled, persistent failure raises EnsembleError") {
  auto bm = brownian_model({});
  auto dead = HFunction::explicit_h(
      bm, [](double t, const Vector&) { return t > 0.5 ? -800.0 : 0.0; },
      [](double, const Vector&) { return scalar_state(0.0); }, 1.0);
  auto bp = BridgeProcess::make(bm, dead, 0.0, v1(0.0));
  auto grid = TimeGrid::uniform(0.0, 1.0, 10, 1e-3);
  auto p = euler_maruyama(bp, grid, 1);
  CHECK(p.diagnostics.failed);
  CHECK(p.diagnostics.h_floor_events == 1);
  CHECK(std::isnan(p.states(0, 10)));
  EnsembleOptions o;
  o.threads = 1;
  CHECK_THROWS_AS(simulate_ensemble(bp, grid, 10, 1, o), EnsembleError);
}

TEST_CASE("non-finite drift raises NumericsError") {
  auto bm = brownian_model({});
  auto bad = HFunction::explicit_h(
      bm, [](double, const Vector&) { return 0.0; },
      [](double, const Vector&) { return scalar_state(std::nan("")); }, 1.0);
  auto bp = BridgeProcess::make(bm, bad, 0.0, v1(0.0));
  CHECK_THROWS_AS(euler_maruyama(bp, TimeGrid::uniform(0.0, 1.0, 10, 1e-3), 1), NumericsError);
}

TEST_CASE("drift cap and domain projection are counted") {
  auto bm = brownian_model({});
  auto steep = HFunction::explicit_h(
      bm, [](double, const Vector& x) { return 1e6 * x(0); },
      [](double, const Vector&) { return scalar_state(1e6); }, 1.0);
  auto p = euler_maruyama(BridgeProcess::make(bm, steep, 0.0, v1(0.0)),
                          TimeGrid::uniform(0.0, 1.0, 10, 1e-3), 1);
  CHECK(p.diagnostics.drift_caps == 10);

  auto b3 = bessel_model({3.0, false});
  auto bp = BridgeProcess::make(b3, HFunction::one(b3), 0.0, v1(1e-3));
  auto q = euler_maruyama(bp, TimeGrid::closed(0.0, 1.0, 50), 4);
  for (Eigen::Index k = 0; k < q.states.cols(); ++k) CHECK(q.states(0, k) > 0.0);
}

TEST_CASE("inverse-CDF sampler hits normal quantiles") {
  auto lf = [](double y) { return -0.5 * y * y; };
  for (double y : {-2.3, -0.1, 0.0, 1.7})
    CHECK(sample_inverse_cdf(lf, 1.0, 3.0, -INFINITY, INFINITY, oracle::Phi(y)) ==
          doctest::Approx(y).epsilon(1e-8));
}

TEST_CASE("exact Markov bridge sampler agrees with the exact Brownian bridge") {
  auto bp = brownian_bridge(0.5);
  auto grid = TimeGrid::uniform(0.0, 1.0, 2, 1e-3);
  EnsembleOptions o;
  o.threads = 1;
  o.scheme = Scheme::exact;
  auto ens = simulate_ensemble(bp, grid, 2000, 17, o);
  std::vector<double> ref;
  for (int i = 0; i < 2000; ++i) ref.push_back(exact_brownian_bridge(v1(0.0), v1(0.5), 1.0, grid, 5000 + i).states(0, 1));
  auto ks = ks_two_sample(ens.marginal(1), ref);
  CHECK(ks.pass);
}

TEST_CASE("unconditioned Euler and exact sampling agree for OU") {
  auto ou = ou_model({1.0, 0.5, 1.0});
  auto grid = TimeGrid::closed(0.0, 1.0, 400);
  EnsembleOptions o;
  o.threads = 1;
  o.stride = 400;
  auto exact = simulate_unconditioned(ou, 0.0, v1(-1.0), grid, 3000, 1, o, true);
  auto euler = simulate_unconditioned(ou, 0.0, v1(-1.0), grid, 3000, 2, o, false);
  CHECK(ks_two_sample(exact.marginal(1), euler.marginal(1)).pass);
}

TEST_CASE("paths CSV layout and round trip") {
  auto bp = brownian_bridge(0.0);
  auto grid = TimeGrid::uniform(0.0, 1.0, 4, 1e-3);
  EnsembleOptions o;
  o.threads = 1;
  auto ens = simulate_ensemble(bp, grid, 3, 5, o);
  std::ostringstream os;
  write_paths_csv(os, ens);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "path_id,t,x_1");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    if (rows == 2) {
      double x = std::stod(line.substr(line.rfind(',') + 1));
      CHECK(x == ens.paths[0].states(0, 1));
    }
  }
  CHECK(rows == 3 * (5 + 1));
}
