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

#include "latperc/box.hpp"

#include <algorithm>
#include <numeric>

namespace latperc {

namespace {

double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    twice += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(twice);
}

// Clip a convex polygon against the half-plane left of edge a->b.
std::vector<Vec2> clip_by_edge(const std::vector<Vec2>& poly, const Vec2& a, const Vec2& b) {
  std::vector<Vec2> out;
  out.reserve(poly.size() + 1);
  const Vec2 e = b - a;
  auto side = [&](const Vec2& p) { return e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x()); };
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& cur = poly[i];
    const Vec2& nxt = poly[(i + 1) % poly.size()];
    const double sc = side(cur), sn = side(nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
      const double t = sc / (sc - sn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

}  // namespace

double intersection_area(const OrientedBox& a, const OrientedBox& b) {
  if (a.length <= 0.0 || a.width <= 0.0 || b.length <= 0.0 || b.width <= 0.0) return 0.0;
  const double dx = a.cx - b.cx, dy = a.cy - b.cy;
  const double reach = a.circumradius() + b.circumradius();
  if (dx * dx + dy * dy > reach * reach) return 0.0;

  const auto ca = a.corners();
  const auto cb = b.corners();
  std::vector<Vec2> poly(ca.begin(), ca.end());
  for (int i = 0; i < 4; ++i) {
    poly = clip_by_edge(poly, cb[i], cb[(i + 1) % 4]);
    if (poly.size() < 3) return 0.0;
  }
  return polygon_area(poly);
}

double rotated_iou(const OrientedBox& a, const OrientedBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<OrientedBox> nms(const std::vector<OrientedBox>& candidates, double iou_threshold) {
  std::vector<size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t i, size_t j) {
    return candidates[i].score > candidates[j].score;
  });

  std::vector<OrientedBox> kept;
  for (size_t idx : order) {
    const OrientedBox& cand = candidates[idx];
    bool suppressed = false;
    for (const OrientedBox& k : kept) {
      // Cheap reject before polygon clipping: disjoint circumcircles
      // cannot overlap at all.
      const double dx = cand.cx - k.cx, dy = cand.cy - k.cy;
      const double reach = cand.circumradius() + k.circumradius();
      if (dx * dx + dy * dy > reach * reach) continue;
      if (rotated_iou(cand, k) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

}  // namespace latperc
