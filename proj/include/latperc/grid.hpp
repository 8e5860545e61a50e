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

#include "latperc/common.hpp"

namespace latperc {

/// Ego-centered, ego-aligned bird's-eye-view grid.
/// Ego frame: +x forward, +y left. Row 0 is the foremost band of cells,
/// column 0 the leftmost; the ego sits at the image center.
struct GridSpec {
  int size_px = 64;
  double res_m = 0.5;

  double half_range() const { return 0.5 * size_px * res_m; }

  /// Center of cell (row, col) in ego-frame meters.
  Vec2 cell_center(int row, int col) const {
    return {(0.5 * size_px - row - 0.5) * res_m, (0.5 * size_px - col - 0.5) * res_m};
  }

  bool contains(double x, double y) const {
    const double h = half_range();
    return x >= -h && x <= h && y >= -h && y <= h;
  }

  /// Cell holding an ego-frame point; callers must range-check first or use in_cell_range.
  void cell_of(double x, double y, int* row, int* col) const {
    *row = static_cast<int>(std::floor(0.5 * size_px - x / res_m));
    *col = static_cast<int>(std::floor(0.5 * size_px - y / res_m));
  }

  bool in_cell_range(int row, int col) const { return row >= 0 && row < size_px && col >= 0 && col < size_px; }

  int pixels() const { return size_px * size_px; }
};

}  // namespace latperc
