#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bridgesim {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A state lies outside the diffusion's domain.
struct DomainError : Error {
  using Error::Error;
};
/// Invalid model or check parameters.
struct ParamError : Error {
  using Error::Error;
};
/// Malformed or inconsistent scenario configuration.
struct ConfigError : ParamError {
  using ParamError::ParamError;
};
/// A time argument is outside its admissible range.
struct TimeError : Error {
  using Error::Error;
};
/// The h-function dropped below the floor at which log-space evaluation is trusted.
struct HFloorError : Error {
  using Error::Error;
};
struct NumericsError : Error {
  using Error::Error;
};
struct IntegrabilityError : Error {
  using Error::Error;
};
struct QuadratureError : Error {
  using Error::Error;
};
struct SingularCovError : Error {
  using Error::Error;
};
struct EnsembleError : Error {
  using Error::Error;
};
struct SampleSizeError : Error {
  using Error::Error;
};

/// Truncated improper integral that neither settled nor clearly blew up.
struct InconclusiveError : Error {
  InconclusiveError(const std::string& what, std::vector<double> partials)
      : Error(what), partials(std::move(partials)) {}
  std::vector<double> partials;
};

}  // namespace bridgesim
