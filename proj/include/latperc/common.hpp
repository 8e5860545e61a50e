// Copyright (c) 2026 The latperc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>

namespace latperc {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Mat = MatX<double>;
using Vec = VecX<double>;
using Matf = MatX<float>;
using Vecf = VecX<float>;
using Vec2 = Eigen::Vector2d;

inline constexpr double kPi = 3.14159265358979323846;

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

/// SE(2) pose: position in meters, yaw in radians wrapped to (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  /// this ∘ p: p expressed in this pose's frame mapped to the parent frame.
  Pose2 compose(const Pose2& p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {x + c * p.x - s * p.y, y + s * p.x + c * p.y, wrap_angle(yaw + p.yaw)};
  }
  Pose2 inverse() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {-(c * x + s * y), -(-s * x + c * y), wrap_angle(-yaw)};
  }
  /// Map a point from the parent frame into this pose's frame.
  Vec2 to_local(const Vec2& p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = p.x() - x, dy = p.y() - y;
    return {c * dx + s * dy, -s * dx + c * dy};
  }
  /// Map a point from this pose's frame into the parent frame.
  Vec2 to_global(const Vec2& p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {x + c * p.x() - s * p.y(), y + s * p.x() + c * p.y()};
  }
};

/// Planar multi-channel image. Storage is channels x pixels with pixel
/// index = row * width + col, so a column holds one pixel's channels.
template <typename Scalar>
struct Image {
  int height = 0;
  int width = 0;
  MatX<Scalar> planes;  // channels x (height * width)

  Image() = default;
  Image(int channels, int h, int w) : height(h), width(w) {
    planes = MatX<Scalar>::Zero(channels, static_cast<Eigen::Index>(h) * w);
  }
  int channels() const { return static_cast<int>(planes.rows()); }
  Scalar& at(int c, int row, int col) { return planes(c, static_cast<Eigen::Index>(row) * width + col); }
  Scalar at(int c, int row, int col) const { return planes(c, static_cast<Eigen::Index>(row) * width + col); }
  void set_pixel(int row, int col, Scalar r, Scalar g, Scalar b) {
    const Eigen::Index p = static_cast<Eigen::Index>(row) * width + col;
    planes(0, p) = r;
    planes(1, p) = g;
    planes(2, p) = b;
  }
};

using ImageF = Image<float>;

/// Violated precondition or shape contract.
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent configuration.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed on-disk data (dataset, checkpoint).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Episode generation failed (e.g. no free spawn slot).
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-recoverable runtime failure (non-finite values mid-run).
struct RuntimeAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A computed quantity came out non-finite. Callers that can retry (the
/// training loop) catch this; anything else escalates it as an abort.
struct NumericalError : RuntimeAbort {
  using RuntimeAbort::RuntimeAbort;
};

}  // namespace latperc
