// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>

namespace upm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;

inline constexpr double kPi = std::numbers::pi;

/// Raised when file contents or a serialized payload do not match the
/// expected layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an argument is outside the domain of an operation.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Splits [0, n) into `workers` contiguous slices and runs `body(begin, end)`
/// on each, one thread per slice. Slices are fixed by (n, workers), so callers
/// that write to disjoint output slots get results independent of scheduling.
void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace upm
