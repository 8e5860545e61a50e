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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "latperc/maskcodec.hpp"
#include "latperc/rng.hpp"

using namespace latperc;

namespace {

// Boxes pairwise far apart so every cell belongs to at most one box and
// NMS can never merge two distinct ground-truth boxes.
std::vector<OrientedBox> random_disjoint_boxes(Rng& rng, const GridSpec& grid, int count) {
  std::vector<OrientedBox> boxes;
  int attempts = 0;
  while (static_cast<int>(boxes.size()) < count && attempts < 10000) {
    ++attempts;
    OrientedBox b;
    const double h = grid.half_range() - 4.0;
    b.cx = rng.uniform(-h, h);
    b.cy = rng.uniform(-h, h);
    b.heading = rng.uniform(-kPi, kPi);
    b.width = rng.uniform(1.5, 2.5);
    b.length = b.width + rng.uniform(0.5, 3.0);
    bool clear = true;
    for (const OrientedBox& o : boxes) {
      const double dx = b.cx - o.cx, dy = b.cy - o.cy;
      if (std::sqrt(dx * dx + dy * dy) < b.circumradius() + o.circumradius() + 2.0 * grid.res_m) {
        clear = false;
        break;
      }
    }
    if (clear) boxes.push_back(b);
  }
  return boxes;
}

}  // namespace

TEST_CASE("empty box list encodes to all-zero mask and decodes to nothing") {
  GridSpec grid;
  auto mask = encode_boxes<double>({}, grid);
  CHECK(mask.cls.isZero());
  CHECK(mask.reg.isZero());
  CHECK(decode_mask(mask, 0.5, 0.1).empty());
}

TEST_CASE("single-cell box at heading pi/2 writes the cos/sin channels") {
  GridSpec grid;
  // Cell (10, 20) center, box small enough to cover only that center.
  const Vec2 c = grid.cell_center(10, 20);
  OrientedBox b{c.x(), c.y(), kPi / 2.0, 0.45, 0.45, 1.0};
  auto mask = encode_boxes<double>({b}, grid);
  const int p = 10 * grid.size_px + 20;
  CHECK(mask.cls.sum() == doctest::Approx(1.0));
  CHECK(mask.cls(0, p) == doctest::Approx(1.0));
  CHECK(mask.reg(0, p) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mask.reg(1, p) == doctest::Approx(1.0));
  CHECK(mask.reg(2, p) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(mask.reg(3, p) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("positive-cell count equals the point-in-rectangle enumeration") {
  GridSpec grid;
  // 4 m x 2 m box centered exactly on a cell center, axis aligned.
  const Vec2 c = grid.cell_center(30, 30);
  OrientedBox b{c.x(), c.y(), 0.0, 4.0, 2.0, 1.0};
  auto mask = encode_boxes<double>({b}, grid);
  int enumerated = 0;
  for (int row = 0; row < grid.size_px; ++row) {
    for (int col = 0; col < grid.size_px; ++col) {
      if (b.contains(grid.cell_center(row, col))) ++enumerated;
    }
  }
  CHECK(enumerated > 0);
  CHECK(static_cast<int>(std::lround(mask.cls.sum())) == enumerated);
}

TEST_CASE("cls map equals independent rasterization for random rotated boxes") {
  GridSpec grid;
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    auto boxes = random_disjoint_boxes(rng, grid, 5);
    auto mask = encode_boxes<double>(boxes, grid);
    for (int row = 0; row < grid.size_px; ++row) {
      for (int col = 0; col < grid.size_px; ++col) {
        const Vec2 cc = grid.cell_center(row, col);
        bool inside = false;
        for (const OrientedBox& b : boxes) inside = inside || b.contains(cc);
        CHECK(mask.cls(0, row * grid.size_px + col) == doctest::Approx(inside ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("overlap ownership goes to the nearer box center, ties to lower index") {
  GridSpec grid;
  const Vec2 c = grid.cell_center(32, 32);
  // Both boxes cover the probe cell; the second's center is nearer.
  OrientedBox far_box{c.x() + 1.4, c.y(), 0.0, 4.0, 4.0, 1.0};
  OrientedBox near_box{c.x() + 0.3, c.y(), 0.0, 4.0, 4.0, 1.0};
  auto mask = encode_boxes<double>({far_box, near_box}, grid);
  const int p = 32 * grid.size_px + 32;
  REQUIRE(mask.cls(0, p) == doctest::Approx(1.0));
  CHECK(mask.reg(2, p) == doctest::Approx(near_box.cx - c.x()).epsilon(1e-12));

  // Same distance: the earlier box in the list wins.
  OrientedBox left{c.x() - 1.0, c.y(), 0.0, 4.0, 4.0, 1.0};
  OrientedBox right{c.x() + 1.0, c.y(), 0.0, 4.0, 4.0, 1.0};
  auto tie_mask = encode_boxes<double>({left, right}, grid);
  CHECK(tie_mask.reg(2, p) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("encode rejects non-positive sizes") {
  GridSpec grid;
  OrientedBox bad{0, 0, 0, 0.0, 1.0, 1.0};
  CHECK_THROWS_AS(encode_boxes<double>({bad}, grid), ContractError);
  bad.length = 2.0;
  bad.width = -0.5;
  CHECK_THROWS_AS(encode_boxes<double>({bad}, grid), ContractError);
}

TEST_CASE("decode validates thresholds and flags non-finite regression") {
  GridSpec grid;
  DetectionMaskD mask(grid);
  CHECK_THROWS_AS(decode_mask(mask, 0.0, 0.1), ContractError);
  CHECK_THROWS_AS(decode_mask(mask, 0.5, 1.5), ContractError);
  mask.cls(0, 7) = 1.0;
  mask.reg(3, 7) = std::nan("");
  CHECK_THROWS_AS(decode_mask(mask, 0.5, 0.1), ContractError);
}

TEST_CASE("round trip recovers disjoint boxes bijectively") {
  GridSpec grid;
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    auto boxes = random_disjoint_boxes(rng, grid, 6);
    REQUIRE(!boxes.empty());
    auto mask = encode_boxes<double>(boxes, grid);
    auto decoded = decode_mask(mask, 0.5, 0.1);
    REQUIRE(decoded.size() == boxes.size());
    std::vector<bool> used(boxes.size(), false);
    for (const OrientedBox& d : decoded) {
      // Match each decoded box to the unique ground-truth box nearby.
      int match = -1;
      for (size_t i = 0; i < boxes.size(); ++i) {
        const double dx = d.cx - boxes[i].cx, dy = d.cy - boxes[i].cy;
        if (!used[i] && std::sqrt(dx * dx + dy * dy) < grid.res_m) match = static_cast<int>(i);
      }
      REQUIRE(match >= 0);
      used[static_cast<size_t>(match)] = true;
      const OrientedBox& g = boxes[static_cast<size_t>(match)];
      CHECK(std::abs(d.length - g.length) < 1e-6);
      CHECK(std::abs(d.width - g.width) < 1e-6);
      CHECK(std::abs(wrap_angle(d.heading - g.heading)) < 1e-6);
      CHECK(d.score == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("duplicate candidates collapse to one box after decode") {
  GridSpec grid;
  // Two positive cells that reconstruct the identical box.
  DetectionMaskD mask(grid);
  const OrientedBox target{1.0, 2.0, 0.4, 4.0, 2.0, 1.0};
  for (int p : {31 * grid.size_px + 28, 31 * grid.size_px + 29}) {
    const int row = p / grid.size_px, col = p % grid.size_px;
    const Vec2 cc = grid.cell_center(row, col);
    mask.cls(0, p) = 0.9;
    mask.reg(0, p) = std::cos(target.heading);
    mask.reg(1, p) = std::sin(target.heading);
    mask.reg(2, p) = target.cx - cc.x();
    mask.reg(3, p) = target.cy - cc.y();
    mask.reg(4, p) = std::log(target.width);
    mask.reg(5, p) = std::log(target.length);
  }
  auto decoded = decode_mask(mask, 0.5, 0.1);
  REQUIRE(decoded.size() == 1);
  CHECK(decoded[0].cx == doctest::Approx(target.cx).epsilon(1e-9));
  CHECK(decoded[0].cy == doctest::Approx(target.cy).epsilon(1e-9));
}

TEST_CASE("float mask keeps the round trip within training tolerances") {
  GridSpec grid;
  Rng rng(19);
  auto boxes = random_disjoint_boxes(rng, grid, 5);
  auto mask = encode_boxes<float>(boxes, grid);
  auto decoded = decode_mask(mask, 0.5, 0.1);
  REQUIRE(decoded.size() == boxes.size());
  for (const OrientedBox& d : decoded) {
    double best = 1e300;
    const OrientedBox* g = nullptr;
    for (const OrientedBox& b : boxes) {
      const double dx = d.cx - b.cx, dy = d.cy - b.cy;
      if (dx * dx + dy * dy < best) {
        best = dx * dx + dy * dy;
        g = &b;
      }
    }
    REQUIRE(g != nullptr);
    CHECK(std::abs(d.length - g->length) < 1e-5);
    CHECK(std::abs(d.width - g->width) < 1e-5);
    CHECK(std::abs(wrap_angle(d.heading - g->heading)) < 1e-5);
  }
}
