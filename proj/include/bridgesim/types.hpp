#pragma once

#include <Eigen/Core>

namespace bridgesim {

/// Largest state dimension supported. States and matrices live on the stack
/// (Eigen's bounded dynamic storage), so the simulation hot loops never
/// touch the heap.
inline constexpr int kMaxDim = 6;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                              kMaxDim, kMaxDim>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;

inline Vector scalar_state(double x) {
  Vector v(1);
  v(0) = x;
  return v;
}

}  // namespace bridgesim
