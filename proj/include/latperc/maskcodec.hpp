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

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "latperc/box.hpp"
#include "latperc/common.hpp"
#include "latperc/grid.hpp"

namespace latperc {

/// Dense PIXOR-style detection target on an ego-centered BEV grid.
/// cls is 1 x (H*W), reg is 6 x (H*W); pixel index = row * W + col.
/// Regression channels: (cos h, sin h, dx, dy, log w, log l) with
/// (dx, dy) the meter offset from the cell center to the box center.
template <typename S>
struct DetectionMask {
  GridSpec grid;
  MatX<S> cls;
  MatX<S> reg;

  explicit DetectionMask(const GridSpec& g = GridSpec{})
      : grid(g),
        cls(MatX<S>::Zero(1, g.pixels())),
        reg(MatX<S>::Zero(6, g.pixels())) {}
};

using DetectionMaskF = DetectionMask<float>;
using DetectionMaskD = DetectionMask<double>;

/// Rasterize boxes onto the grid. A cell is positive when its center
/// lies inside some box; cells claimed by several boxes go to the one
/// with the nearest center (ties to the lower list index).
template <typename S>
DetectionMask<S> encode_boxes(const std::vector<OrientedBox>& boxes, const GridSpec& grid) {
  for (size_t b = 0; b < boxes.size(); ++b) {
    if (!(boxes[b].length > 0.0) || !(boxes[b].width > 0.0)) {
      std::ostringstream msg;
      msg << "encode_boxes: box " << b << " has non-positive size " << boxes[b].length << " x "
          << boxes[b].width;
      throw ContractError(msg.str());
    }
  }

  DetectionMask<S> mask(grid);
  for (int row = 0; row < grid.size_px; ++row) {
    for (int col = 0; col < grid.size_px; ++col) {
      const Vec2 center = grid.cell_center(row, col);
      int owner = -1;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (size_t b = 0; b < boxes.size(); ++b) {
        const OrientedBox& box = boxes[b];
        const double dx = box.cx - center.x(), dy = box.cy - center.y();
        const double d2 = dx * dx + dy * dy;
        const double r = box.circumradius();
        if (d2 > r * r) continue;
        if (!box.contains(center)) continue;
        if (d2 < best_d2) {
          best_d2 = d2;
          owner = static_cast<int>(b);
        }
      }
      if (owner < 0) continue;
      const OrientedBox& box = boxes[static_cast<size_t>(owner)];
      const int p = row * grid.size_px + col;
      mask.cls(0, p) = S(1);
      mask.reg(0, p) = static_cast<S>(std::cos(box.heading));
      mask.reg(1, p) = static_cast<S>(std::sin(box.heading));
      mask.reg(2, p) = static_cast<S>(box.cx - center.x());
      mask.reg(3, p) = static_cast<S>(box.cy - center.y());
      mask.reg(4, p) = static_cast<S>(std::log(box.width));
      mask.reg(5, p) = static_cast<S>(std::log(box.length));
    }
  }
  return mask;
}

/// Invert the encoding: every cell with cls >= score_threshold becomes
/// a candidate, then greedy NMS prunes duplicates. Returned boxes carry
/// the cell's cls value as score, in descending score order.
template <typename S>
std::vector<OrientedBox> decode_mask(const DetectionMask<S>& mask, double score_threshold,
                                     double nms_iou) {
  if (!(score_threshold > 0.0) || !(score_threshold < 1.0)) {
    throw ContractError("decode_mask: score_threshold must lie in (0, 1)");
  }
  if (!(nms_iou >= 0.0) || !(nms_iou <= 1.0)) {
    throw ContractError("decode_mask: nms_iou must lie in [0, 1]");
  }
  if (mask.cls.cols() != mask.grid.pixels() || mask.reg.cols() != mask.grid.pixels() ||
      mask.cls.rows() != 1 || mask.reg.rows() != 6) {
    throw ContractError("decode_mask: mask tensor shape does not match its grid");
  }

  std::vector<OrientedBox> candidates;
  for (int row = 0; row < mask.grid.size_px; ++row) {
    for (int col = 0; col < mask.grid.size_px; ++col) {
      const int p = row * mask.grid.size_px + col;
      const double score = static_cast<double>(mask.cls(0, p));
      if (score < score_threshold) continue;
      for (int c = 0; c < 6; ++c) {
        if (!std::isfinite(static_cast<double>(mask.reg(c, p)))) {
          std::ostringstream msg;
          msg << "decode_mask: non-finite regression at cell (" << row << ", " << col
              << ") channel " << c;
          throw ContractError(msg.str());
        }
      }
      const Vec2 center = mask.grid.cell_center(row, col);
      OrientedBox box;
      box.cx = center.x() + static_cast<double>(mask.reg(2, p));
      box.cy = center.y() + static_cast<double>(mask.reg(3, p));
      box.heading = wrap_angle(
          std::atan2(static_cast<double>(mask.reg(1, p)), static_cast<double>(mask.reg(0, p))));
      box.width = std::exp(static_cast<double>(mask.reg(4, p)));
      box.length = std::exp(static_cast<double>(mask.reg(5, p)));
      box.score = score;
      candidates.push_back(box);
    }
  }
  return nms(candidates, nms_iou);
}

}  // namespace latperc
