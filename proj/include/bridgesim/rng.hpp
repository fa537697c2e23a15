#pragma once

#include <cstdint>
#include <random>

#include "bridgesim/types.hpp"

namespace bridgesim {

using Engine = std::mt19937_64;

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of the sub-stream for (master, path, attempt). A pure function of its
/// arguments, so ensembles do not depend on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t path,
                                    std::uint64_t attempt = 0) {
  return mix64(mix64(mix64(master) ^ path) ^ (attempt * 0xd1b54a32d192ed03ULL));
}

inline Vector standard_normal(Engine& eng, std::normal_distribution<double>& n01, int dim) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = n01(eng);
  return v;
}

inline Vector standard_normal(Engine& eng, int dim) {
  std::normal_distribution<double> n01;
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = n01(eng);
  return v;
}

/// Uniform on the open interval (0, 1).
inline double open_uniform(Engine& eng) {
  constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
  return (static_cast<double>(eng() >> 11) + 0.5) * scale;
}

}  // namespace bridgesim
