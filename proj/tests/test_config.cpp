#include <doctest.h>

#include "bridgesim/config.hpp"
#include "bridgesim/errors.hpp"

using namespace bridgesim;
using nlohmann::json;

TEST_CASE("default config is a Brownian bridge 0 -> 0") {
  auto cfg = default_config();
  CHECK(cfg.model == BuiltinModel::brownian);
  CHECK(cfg.conditioning == ConditioningKind::strong);
  CHECK(cfg.target(0) == 0.0);
  CHECK(cfg.horizon == 1.0);
  auto grid = build_grid(cfg);
  CHECK(grid.steps() == 2000);
  CHECK(grid.delta_min() == doctest::Approx(1e-4));
}

TEST_CASE("config parsing") {
  json doc = {{"model", {{"name", "ou"}, {"params", {{"theta", 2.0}, {"sigma", 0.5}}}}},
              {"conditioning", {{"type", "indicator"}, {"lo", 1.0}, {"hi", nullptr}}},
              {"start", {{"s", 0.1}, {"x", -0.3}}},
              {"horizon", 2.0},
              {"grid", {{"refinement", "uniform"}, {"N", 100}, {"delta_min", 1e-3}}},
              {"ensemble", {{"n_paths", 50}, {"master_seed", 9}, {"scheme", "exact"}}},
              {"outputs", {{"paths", false}, {"stride", 10}, {"directory", "x"}}}};
  auto cfg = parse_config(doc);
  CHECK(cfg.model == BuiltinModel::ou);
  CHECK(std::get<OuParams>(cfg.params).theta == 2.0);
  CHECK(cfg.conditioning == ConditioningKind::indicator);
  CHECK(cfg.region.lo(0) == 1.0);
  CHECK(std::isinf(cfg.region.hi(0)));
  CHECK(cfg.start_time == 0.1);
  CHECK(cfg.n_paths == 50);
  CHECK(cfg.master_seed == 9);
  CHECK(cfg.scheme == Scheme::exact);
  CHECK_FALSE(cfg.write_paths);
  CHECK(cfg.stride == 10);
  CHECK(cfg.out_dir == "x");
  auto grid = build_grid(cfg);
  CHECK(grid.steps() == 100);
  CHECK(grid.delta_min() == doctest::Approx(1e-3));
  auto h = build_h(cfg, build_model(cfg));
  CHECK(h.kind() == HFunction::Kind::indicator);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config(json{{"horizon", 1.0}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"model", {{"name", "nope"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"model", {{"name", "brownian"}}}, {"horizon", -1.0}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"model", {{"name", "brownian"}}},
                                    {"conditioning", {{"type", "strong"}, {"z", {1.0, 2.0}}}}}),
                  ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), ConfigError);
  CHECK_THROWS_AS(run_suite(default_config(), "bogus"), ConfigError);
  CHECK(is_suite("appendixB"));
  CHECK_FALSE(is_suite("bogus"));
}
