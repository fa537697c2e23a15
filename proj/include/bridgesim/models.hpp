#pragma once

#include <string_view>
#include <variant>

#include "bridgesim/diffusion.hpp"

namespace bridgesim {

enum class BuiltinModel { brownian, linear_gaussian, ou, bessel, geometric_bm };

/// dX = mu dt + sigma dB in R^d.
struct BrownianParams {
  int dim = 1;
  Vector drift;  // empty means zero
  double sigma = 1.0;
};

/// Constant-coefficient linear SDE dX = sigma dB + (b + gamma X) dt.
struct LinearGaussianParams {
  Matrix sigma;
  Vector b;
  Matrix gamma;
  double horizon = 1.0;
};

/// dX = theta (mean - X) dt + sigma dB.
struct OuParams {
  double theta = 1.0;
  double mean = 0.0;
  double sigma = 1.0;
};

/// Bessel process of dimension delta on [0, inf).
struct BesselParams {
  double dimension = 3.0;
  bool speed_measure = false;  // densities relative to m(dy) = 2 y^(delta-1) dy
};

/// dX = mu X dt + sigma X dB on (0, inf).
struct GeometricBmParams {
  double mu = 0.0;
  double sigma = 1.0;
};

using ModelParams =
    std::variant<BrownianParams, LinearGaussianParams, OuParams, BesselParams, GeometricBmParams>;

ModelPtr brownian_model(const BrownianParams& p);
ModelPtr ou_model(const OuParams& p);
ModelPtr bessel_model(const BesselParams& p);
ModelPtr geometric_bm_model(const GeometricBmParams& p);
ModelPtr linear_gaussian_model(const LinearGaussianParams& p);

/// Dispatches on `name`; throws ParamError when the params do not belong to
/// the named family or are out of range.
ModelPtr builtin_model(BuiltinModel name, const ModelParams& params);

BuiltinModel parse_builtin_model(std::string_view name);
std::string_view to_string(BuiltinModel name);

}  // namespace bridgesim
