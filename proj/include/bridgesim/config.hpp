#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bridgesim/integrator.hpp"
#include "bridgesim/models.hpp"
#include "bridgesim/verify.hpp"

namespace bridgesim {

enum class ConditioningKind { none, strong, weak, indicator };

/// Terminal density H for weak conditioning: a Gaussian bump (truncated at
/// mean +- 8 sd) or a uniform density on [lo, hi].
struct WeakSpec {
  enum class Kind { gaussian, uniform };
  Kind kind = Kind::gaussian;
  double a = 0.0;  // mean or lo
  double b = 1.0;  // sd or hi
};

struct GridSpec {
  TimeGrid::Refinement refinement = TimeGrid::Refinement::geometric;
  int steps = 2000;
  double gamma = 2.0;
  /// Absolute delta_min; unset means 1e-4 (T* - s).
  std::optional<double> delta_min;
};

/// A simulation/verification scenario, as read from a JSON document.
struct ScenarioConfig {
  BuiltinModel model = BuiltinModel::brownian;
  ModelParams params = BrownianParams{};
  ConditioningKind conditioning = ConditioningKind::strong;
  Vector target;  // strong
  Region region;  // indicator
  WeakSpec weak;
  double start_time = 0.0;
  Vector start;
  double horizon = 1.0;
  GridSpec grid;
  std::size_t n_paths = 1000;
  std::uint64_t master_seed = 20240601;
  Scheme scheme = Scheme::euler;
  bool write_paths = true;
  std::size_t stride = 1;
  bool write_reports = true;
  std::string out_dir = "bridgesim-out";
};

/// Throws ConfigError with a message naming the offending field.
ScenarioConfig parse_config(const nlohmann::json& doc);
ScenarioConfig load_config(const std::string& path);
/// Brownian bridge from 0 at s = 0 to 0 at T* = 1.
ScenarioConfig default_config();

ModelPtr build_model(const ScenarioConfig& cfg);
HFunction build_h(const ScenarioConfig& cfg, const ModelPtr& model);
TimeGrid build_grid(const ScenarioConfig& cfg, std::span<const double> required = {});

/// Suites: assumptions, bridge, martingale, appendixB, all. Unknown names
/// throw ConfigError.
std::vector<VerificationReport> run_suite(const ScenarioConfig& cfg, std::string_view suite,
                                          unsigned threads = 0);
bool is_suite(std::string_view suite);

}  // namespace bridgesim
