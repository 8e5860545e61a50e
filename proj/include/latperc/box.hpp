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

#include <array>
#include <vector>

#include "latperc/common.hpp"

namespace latperc {

/// Bird's-eye-view rectangle: center in meters, heading in radians
/// (wrapped to (-pi, pi]), size in meters, detection score in [0, 1].
struct OrientedBox {
  double cx = 0.0;
  double cy = 0.0;
  double heading = 0.0;
  double length = 1.0;
  double width = 1.0;
  double score = 1.0;

  double area() const { return length * width; }

  /// Half the diagonal; any point farther from the center is outside.
  double circumradius() const { return 0.5 * std::sqrt(length * length + width * width); }

  /// Corners in counter-clockwise order.
  std::array<Vec2, 4> corners() const {
    const double c = std::cos(heading), s = std::sin(heading);
    const Vec2 d{c, s}, n{-s, c};
    const Vec2 ctr{cx, cy};
    const double hl = 0.5 * length, hw = 0.5 * width;
    return {ctr + d * hl + n * hw, ctr - d * hl + n * hw, ctr - d * hl - n * hw, ctr + d * hl - n * hw};
  }

  bool contains(const Vec2& p) const {
    const double c = std::cos(heading), s = std::sin(heading);
    const double dx = p.x() - cx, dy = p.y() - cy;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::abs(lx) <= 0.5 * length && std::abs(ly) <= 0.5 * width;
  }
};

/// Area of the intersection polygon of two oriented rectangles
/// (Sutherland-Hodgman clipping + shoelace area).
double intersection_area(const OrientedBox& a, const OrientedBox& b);

/// Intersection over union of two oriented rectangles, in [0, 1].
double rotated_iou(const OrientedBox& a, const OrientedBox& b);

/// Greedy non-maximum suppression: repeatedly keep the highest-score
/// candidate (ties: earlier index) and drop the rest whose IoU with it
/// exceeds iou_threshold. Output keeps the kept order.
std::vector<OrientedBox> nms(const std::vector<OrientedBox>& candidates, double iou_threshold);

}  // namespace latperc
