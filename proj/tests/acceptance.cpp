// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero if
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "bridgesim/errors.hpp"
#include "bridgesim/gaussian.hpp"
#include "bridgesim/integrator.hpp"
#include "bridgesim/ks.hpp"
#include "bridgesim/models.hpp"
#include "bridgesim/scale_speed.hpp"
#include "bridgesim/verify.hpp"
#include "oracles.hpp"

using namespace bridgesim;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

Vector v1(double x) { return scalar_state(x); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Threads fixed at 1 so the pinned runtimes do not depend on the host.
constexpr unsigned kThreads = 1;

Outcome brownian_reduction() {
  Outcome o;
  auto bm = brownian_model({});
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ut(0.0, 0.999), uy(-3.0, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 1000;) {
    const double t = ut(rng), y = uy(rng), z = uy(rng);
    // Redraw where h = p(1 - t, y, z) underflows the floor; the drift is undefined there.
    const double tau = 1.0 - t;
    if (-(z - y) * (z - y) / (2 * tau) - 0.5 * std::log(2 * M_PI * tau) < std::log(kHFloor) + 1) continue;
    ++i;
    auto bp = BridgeProcess::make(bm, HFunction::strong(bm, 1.0, v1(z)), 0.0, v1(0.0));
    const double got = bridge_drift(bp, t, v1(y))(0);
    const double ref = oracle::brownian_bridge_drift(t, y, z, 1.0);
    worst = std::max(worst, std::abs(got - ref) / std::max(1.0, std::abs(ref)));
  }
  o.require(worst <= 1e-12, "max rel error " + fmt(worst));
  return o;
}

Outcome sde_vs_exact() {
  Outcome o;
  const double z = 0.5;
  auto bm = brownian_model({});
  auto h = HFunction::strong(bm, 1.0, v1(z));
  auto bp = BridgeProcess::make(bm, h, 0.0, v1(0.0));
  const double ts[] = {0.25, 0.5, 0.75};
  auto grid = TimeGrid::geometric(0.0, 1.0, 2000, 2.0, 1e-4, ts);
  EnsembleOptions eo;
  eo.threads = kThreads;
  eo.stride = 100000;
  eo.record_times = {0.25, 0.5, 0.75};
  auto ens = simulate_ensemble(bp, grid, 10000, 20240601, eo);
  for (double t : ts) {
    auto r = transition_law_check(ens, h, t);
    o.require(r.pass, "transition_law_check failed at t=" + fmt(t));
    // Closed-form bridge marginal N(t z, t (1 - t)).
    auto ks = ks_one_sample(ens.marginal(ens.position_near(t)),
                            [&](double y) { return oracle::Phi((y - t * z) / std::sqrt(t * (1 - t))); });
    o.require(ks.pass, "closed-form KS failed at t=" + fmt(t) + " D=" + fmt(ks.statistic));
  }
  auto xs = ens.marginal(ens.position_near(0.5));
  double m = 0.0, ss = 0.0;
  for (double x : xs) m += x;
  m /= xs.size();
  for (double x : xs) ss += (x - m) * (x - m);
  const double se = std::sqrt(ss / (xs.size() - 1) / xs.size());
  o.require(std::abs(m - 0.5 * z) <= 3.0 * se, "E[X_0.5]=" + fmt(m) + " se=" + fmt(se));
  return o;
}

Outcome pinning() {
  Outcome o;
  EnsembleOptions eo;
  eo.threads = kThreads;
  eo.stride = 100000;
  auto check = [&](const ModelPtr& model, double x, double z, const std::string& name) {
    auto bp = BridgeProcess::make(model, HFunction::strong(model, 1.0, v1(z)), 0.0, v1(x));
    auto ens = simulate_ensemble(bp, TimeGrid::geometric(0.0, 1.0, 2000, 2.0, 1e-4), 10000, 77, eo);
    auto r = bridge_hit_check(ens, v1(z), 0.05);
    o.require(r.pass, name + " hit fraction " + fmt(r.statistics["fraction"].get<double>()));
    o.require(ens.counters.h_floor_events == 0,
              name + " h floor events " + std::to_string(ens.counters.h_floor_events));
  };
  check(brownian_model({}), 0.0, 0.7, "brownian");
  check(ou_model({1.0, 0.0, 1.0}), -0.5, 1.0, "ou");
  return o;
}

Outcome weak_conditioning() {
  Outcome o;
  auto bm = brownian_model({});
  auto h = HFunction::indicator(bm, 1.0, Region::interval(1.0, INFINITY));
  auto bp = BridgeProcess::make(bm, h, 0.0, v1(0.0));
  EnsembleOptions eo;
  eo.threads = kThreads;
  eo.stride = 100000;
  auto ens = simulate_ensemble(bp, TimeGrid::geometric(0.0, 1.0, 2000, 2.0, 1e-4), 10000, 5, eo);
  auto r = terminal_law_check(ens, h);
  o.require(r.pass, "terminal_law_check failed");
  // N(0, 1) truncated to [1, inf).
  const double tail = oracle::Phi(-1.0);
  auto ks = ks_one_sample(ens.terminal(), [&](double y) {
    return y < 1.0 ? 0.0 : (oracle::Phi(y) - oracle::Phi(1.0)) / tail;
  });
  o.require(ks.pass, "truncated-normal KS D=" + fmt(ks.statistic));
  return o;
}

Outcome martingale() {
  Outcome o;
  MartingaleOptions mo;
  mo.n_paths = 10000;
  mo.threads = kThreads;
  const double ts[] = {0.25, 0.5, 0.9};
  auto bm = brownian_model({});
  auto ou = ou_model({1.0, 0.0, 1.0});
  o.require(martingale_check(HFunction::strong(bm, 1.0, v1(0.3)), 0.0, v1(0.0), ts, mo).pass,
            "brownian");
  o.require(martingale_check(HFunction::strong(ou, 1.0, v1(0.5)), 0.0, v1(-0.2), ts, mo).pass,
            "ou");
  return o;
}

Outcome assumptions() {
  Outcome o;
  auto bm = brownian_model({});
  auto ou = ou_model({1.0, 0.0, 1.0});
  o.require(chapman_kolmogorov_check(*bm, 0.3, 0.7, v1(0.0), v1(0.5), 1e-6).pass, "CK brownian");
  o.require(chapman_kolmogorov_check(*ou, 0.2, 1.0, v1(1.0), v1(-0.4), 1e-6).pass, "CK ou");
  o.require(dual_limit_check(*bm, 0.0, 0.0, 0.5, 0.4).pass, "dual limit");
  o.require(density_sup_check(*bm, 0.0, 0.5, 1.0).pass, "density sup");
  auto bp = bounded_potential_check(*bm, 0.0, 1.0, 2.0);
  o.require(bp.pass, "bounded potential");
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> la(-1.0, 4.0), pos(-2.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double alpha = std::pow(10.0, la(rng)), x = pos(rng), y = pos(rng);
    auto u = potential_density(*bm, alpha, v1(x), v1(y));
    const double ref = oracle::brownian_resolvent(alpha, x, y);
    worst = std::max(worst, u.infinite ? INFINITY : std::abs(u.value - ref) / ref);
  }
  o.require(worst <= 1e-6, "resolvent rel error " + fmt(worst));
  return o;
}

Outcome scale_speed() {
  Outcome o;
  auto b3 = bessel_model({3.0, false});
  auto sf = std::make_shared<const ScaleFunction>(b3->spec, 1.0);
  double worst = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double x = 0.1 * std::pow(500.0, i / 1000.0);
    worst = std::max(worst, std::abs((*sf)(x) - (1.0 - 1.0 / x)));
  }
  o.require(worst <= 1e-8, "bessel scale error " + fmt(worst));
  SpeedDensity sd(sf);
  o.require(classify_boundary(sd, Endpoint::lower).classification == BoundaryClass::entrance,
            "bessel lower not entrance");
  o.require(classify_boundary(sd, Endpoint::upper).classification == BoundaryClass::natural,
            "bessel upper not natural");
  for (auto [m, name] : {std::pair{brownian_model({}), "brownian"},
                         std::pair{ou_model({1.0, 0.0, 1.0}), "ou"}}) {
    SpeedDensity s(std::make_shared<const ScaleFunction>(m->spec, 0.0));
    for (auto e : {Endpoint::lower, Endpoint::upper})
      o.require(classify_boundary(s, e).classification == BoundaryClass::natural,
                std::string(name) + " " + to_string(e) + " not natural");
  }
  return o;
}

Outcome gaussian() {
  Outcome o;
  Matrix sigma(2, 2), gamma(2, 2);
  sigma << 1.0, 0.0, 0.3, 0.8;
  gamma << -0.5, 1.0, -1.0, -0.2;
  Vector b(2);
  b << 0.4, -0.1;
  auto sde = LinearSDE::constant(sigma, b, gamma, 2.0);
  auto sol = std::make_shared<const FundamentalSolution>(sde);
  for (double t : {0.0, 0.5, 1.3, 2.0}) {
    auto fm = sol->at(t);
    o.require((fm.F * fm.F_inv - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-10,
              "F F^-1 at t=" + fmt(t));
  }
  auto model = gaussian_density_model(sol);
  Vector z(2);
  z << 0.5, -0.5;
  auto bp = BridgeProcess::make(model, HFunction::strong(model, 2.0, z), 0.0, Vector::Zero(2));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> us(0.0, 1.9), pos(-2.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Vector y(2);
    y << pos(rng), pos(rng);
    const double s = us(rng);
    Vector a = gaussian_bridge_drift(*sol, s, y, z);
    worst = std::max(worst, (a - bridge_drift(bp, s, y)).norm() / std::max(1.0, a.norm()));
  }
  o.require(worst <= 1e-8, "drift mismatch " + fmt(worst));

  // Sign: the drift correction must be a grad log p(T - s, x, z), by central differences.
  const double s = 0.4;
  Vector x(2);
  x << 0.3, -0.7;
  auto ref = oracle::linear_moments(Eigen::MatrixXd(sigma), Eigen::VectorXd(b), Eigen::MatrixXd(gamma), 2.0 - s);
  auto logp = [&](const Eigen::VectorXd& xx) {
    return oracle::log_gaussian(Eigen::VectorXd(z), ref.F * xx + ref.shift, ref.cov);
  };
  Eigen::VectorXd grad(2);
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
    e(i) = 1e-5;
    grad(i) = (logp(Eigen::VectorXd(x) + e) - logp(Eigen::VectorXd(x) - e)) / 2e-5;
  }
  Eigen::VectorXd expected =
      Eigen::VectorXd(b + gamma * x) + Eigen::MatrixXd(sigma * sigma.transpose()) * grad;
  o.require((Eigen::VectorXd(gaussian_bridge_drift(*sol, s, x, z)) - expected).cwiseAbs().maxCoeff() <= 1e-6,
            "sign check");

  auto bsde = LinearSDE::constant(Matrix::Identity(1, 1), Vector::Zero(1), Matrix::Zero(1, 1), 1.0);
  FundamentalSolution bsol(bsde);
  for (double t : {0.0, 0.25, 0.5, 0.9}) {
    const double got = gaussian_bridge_drift(bsol, t, v1(0.2), v1(-0.4))(0);
    const double want = oracle::brownian_bridge_drift(t, 0.2, -0.4, 1.0);
    o.require(std::abs(got - want) <= 1e-12 * std::abs(want), "brownian specialisation");
  }
  return o;
}

Outcome laplace_limits() {
  Outcome o;
  auto r = laplace_limit_check([](double, double s) { return s; }, LaplaceMode::a_i);
  o.require(r.pass, "mode a_i");
  LaplaceOptions lo;
  double worst = 0.0;
  const auto& vals = r.statistics["values"];
  for (std::size_t i = 0; i < lo.alphas.size(); ++i) {
    const double ref = oracle::laplace_of_identity(lo.alphas[i], lo.t);
    worst = std::max(worst, std::abs(vals[i].get<double>() - ref));
  }
  o.require(worst <= 1e-6, "closed form gap " + fmt(worst));
  auto rb = laplace_limit_check([](double t, double s) { return std::min(1.0, s / t); }, LaplaceMode::b);
  o.require(rb.pass && rb.statistics["hypotheses_hold"].get<bool>(), "mode b");
  const auto& vb = rb.statistics["values"];
  for (std::size_t i = 1; i < vb.size(); ++i)
    o.require(vb[i].get<double>() < vb[i - 1].get<double>(), "mode b trend not decreasing");
  return o;
}

Outcome determinism() {
  Outcome o;
  auto bm = brownian_model({});
  auto bp = BridgeProcess::make(bm, HFunction::strong(bm, 1.0, v1(0.5)), 0.0, v1(0.0));
  auto grid = TimeGrid::geometric(0.0, 1.0, 500, 2.0, 1e-4);
  std::string ref;
  for (unsigned threads : {1u, 4u, 8u}) {
    EnsembleOptions eo;
    eo.threads = threads;
    auto ens = simulate_ensemble(bp, grid, 500, 31337, eo);
    std::ostringstream os;
    write_paths_csv(os, ens);
    if (ref.empty()) ref = os.str();
    o.require(os.str() == ref, "threads=" + std::to_string(threads) + " differs");
  }
  return o;
}

struct Criterion {
  const char* name;
  double budget_seconds;  // 0: none
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"brownian_bridge_reduction", 1.0, brownian_reduction},
      {"sde_vs_exact_law", 15.0, sde_vs_exact},
      {"pinning", 30.0, pinning},
      {"weak_conditioning", 20.0, weak_conditioning},
      {"martingale_of_h", 0.0, martingale},
      {"assumption_suite", 0.0, assumptions},
      {"scale_speed", 0.0, scale_speed},
      {"gaussian_module", 0.0, gaussian},
      {"laplace_limits", 0.0, laplace_limits},
      {"determinism", 0.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_seconds > 0 && secs > c.budget_seconds)
      out.require(false, "runtime over " + fmt(c.budget_seconds) + " s");
    std::printf("%s %s (%.2f s)%s%s\n", out.pass ? "PASS" : "FAIL", c.name, secs,
                out.detail.empty() ? "" : ": ", out.detail.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
