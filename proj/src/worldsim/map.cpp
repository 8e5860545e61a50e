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

#include "latperc/worldsim/map.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "latperc/rng.hpp"

namespace latperc {

namespace {

constexpr double kStopBandDepth = 0.8;    // stop line thickness along the road, m
constexpr double kMarkingHalfWidth = 0.25;  // center line half thickness, m

struct NodeInfo {
  Vec2 pos;
  bool junction = false;           // street crossing (vs map-edge endpoint)
  std::vector<int> in_edges;       // lane ids ending here
  std::vector<int> out_edges;      // lane ids starting here
  std::vector<Vec2> in_dirs;       // unit travel direction of each in edge
  std::vector<Vec2> out_dirs;
};

// Right-hand perpendicular of a unit direction (driving side offset).
Vec2 right_of(const Vec2& d) { return {d.y(), -d.x()}; }

void finish_segment(RoadSegment* seg) {
  seg->cum_len.assign(1, 0.0);
  for (size_t i = 1; i < seg->pts.size(); ++i) {
    seg->cum_len.push_back(seg->cum_len.back() + (seg->pts[i] - seg->pts[i - 1]).norm());
  }
}

}  // namespace

Eigen::Vector3f hsv_to_quantized_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double i = std::floor(h * 6.0);
  const double f = h * 6.0 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - f * s);
  const double t = v * (1.0 - (1.0 - f) * s);
  double r = v, g = t, b = p;
  switch (static_cast<int>(i) % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    case 5: r = v; g = p; b = q; break;
  }
  // Snap to the u8 grid so images survive the on-disk u8 round trip exactly.
  auto snap = [](double x) { return static_cast<float>(std::lround(x * 255.0) / 255.0); };
  return {snap(r), snap(g), snap(b)};
}

WorldMap build_world(uint64_t seed, const WorldConfig& config) {
  config.validate();

  WorldMap map;
  map.bounds = config.bounds_m;
  map.lane_width = config.lane_width_m;
  map.seed = seed;

  const double half = map.half_bounds();
  const double pitch = config.grid_pitch_m;
  const double limit = half - 0.5 * pitch;
  const int kmax = static_cast<int>(std::floor(limit / pitch));
  for (int k = -kmax; k <= kmax; ++k) {
    map.street_xs.push_back(k * pitch);
    map.street_ys.push_back(k * pitch);
  }

  // Node grid: street crossings plus map-edge endpoints of every street.
  std::map<std::pair<long long, long long>, int> node_index;
  std::vector<NodeInfo> nodes;
  auto node_at = [&](double x, double y, bool junction) {
    const auto key = std::make_pair(std::llround(x * 1024.0), std::llround(y * 1024.0));
    auto it = node_index.find(key);
    if (it == node_index.end()) {
      it = node_index.emplace(key, static_cast<int>(nodes.size())).first;
      nodes.push_back(NodeInfo{{x, y}, junction, {}, {}, {}, {}});
    }
    nodes[static_cast<size_t>(it->second)].junction |= junction;
    return it->second;
  };
  for (double x : map.street_xs) {
    node_at(x, -half, false);
    node_at(x, half, false);
    for (double y : map.street_ys) node_at(x, y, true);
  }
  for (double y : map.street_ys) {
    node_at(-half, y, false);
    node_at(half, y, false);
  }

  // One directed lane per travel direction between consecutive nodes of a
  // street, offset half a lane to the right of travel and trimmed back to
  // the edge of any junction square it touches.
  const double lw = map.lane_width;
  auto add_lane = [&](int from, int to) {
    const Vec2 a = nodes[static_cast<size_t>(from)].pos;
    const Vec2 b = nodes[static_cast<size_t>(to)].pos;
    const Vec2 d = (b - a).normalized();
    const Vec2 off = right_of(d) * (0.5 * lw);
    const double trim_a = nodes[static_cast<size_t>(from)].junction ? lw : 0.0;
    const double trim_b = nodes[static_cast<size_t>(to)].junction ? lw : 0.0;
    RoadSegment seg;
    seg.pts = {a + d * trim_a + off, b - d * trim_b + off};
    seg.lane_width = lw;
    finish_segment(&seg);
    const int id = static_cast<int>(map.segments.size());
    map.segments.push_back(std::move(seg));
    nodes[static_cast<size_t>(from)].out_edges.push_back(id);
    nodes[static_cast<size_t>(from)].out_dirs.push_back(d);
    nodes[static_cast<size_t>(to)].in_edges.push_back(id);
    nodes[static_cast<size_t>(to)].in_dirs.push_back(d);
    return id;
  };
  for (double x : map.street_xs) {
    std::vector<double> ys = {-half, half};
    ys.insert(ys.end(), map.street_ys.begin(), map.street_ys.end());
    std::sort(ys.begin(), ys.end());
    for (size_t i = 0; i + 1 < ys.size(); ++i) {
      const int lo = node_at(x, ys[i], false), hi = node_at(x, ys[i + 1], false);
      add_lane(lo, hi);
      add_lane(hi, lo);
    }
  }
  for (double y : map.street_ys) {
    std::vector<double> xs = {-half, half};
    xs.insert(xs.end(), map.street_xs.begin(), map.street_xs.end());
    std::sort(xs.begin(), xs.end());
    for (size_t i = 0; i + 1 < xs.size(); ++i) {
      const int lo = node_at(xs[i], y, false), hi = node_at(xs[i + 1], y, false);
      add_lane(lo, hi);
      add_lane(hi, lo);
    }
  }

  // Connectors: inside a junction an incoming lane may continue straight
  // or turn left/right; at a map edge it U-turns into the reverse lane.
  for (const NodeInfo& node : nodes) {
    for (size_t ii = 0; ii < node.in_edges.size(); ++ii) {
      const int in_id = node.in_edges[ii];
      const Vec2 din = node.in_dirs[ii];
      for (size_t oo = 0; oo < node.out_edges.size(); ++oo) {
        const int out_id = node.out_edges[oo];
        const Vec2 dout = node.out_dirs[oo];
        const double dot = din.dot(dout);
        const bool reverse = dot < -0.5;
        if (node.junction && reverse) continue;       // no U-turns inside junctions
        if (!node.junction && !reverse) continue;     // map edge only offers the U-turn
        RoadSegment conn;
        conn.pts = {map.segments[static_cast<size_t>(in_id)].pts.back(),
                    map.segments[static_cast<size_t>(out_id)].pts.front()};
        conn.lane_width = lw;
        conn.is_connector = true;
        finish_segment(&conn);
        conn.next.push_back(out_id);
        const int cid = static_cast<int>(map.segments.size());
        map.segments.push_back(std::move(conn));
        map.segments[static_cast<size_t>(in_id)].next.push_back(cid);
      }
    }
  }

  for (const NodeInfo& node : nodes) {
    if (!node.junction) continue;
    Intersection junction;
    junction.center = node.pos;
    junction.segment_ids = node.in_edges;
    junction.segment_ids.insert(junction.segment_ids.end(), node.out_edges.begin(),
                                node.out_edges.end());
    map.intersections.push_back(std::move(junction));
  }

  // Buildings fill the blocks between roads: per block a fixed number of
  // boxes side by side along the wider axis, with seeded jitter in size,
  // position, color and height. Their colors are the main landmark signal
  // the camera offers for global localization.
  std::vector<double> xs_b = {-half, half}, ys_b = {-half, half};
  xs_b.insert(xs_b.end(), map.street_xs.begin(), map.street_xs.end());
  ys_b.insert(ys_b.end(), map.street_ys.begin(), map.street_ys.end());
  std::sort(xs_b.begin(), xs_b.end());
  std::sort(ys_b.begin(), ys_b.end());
  Rng map_rng(seed);
  uint64_t block_tag = 0;
  const double shrink = lw + config.building_margin_m;
  for (size_t bi = 0; bi + 1 < xs_b.size(); ++bi) {
    for (size_t bj = 0; bj + 1 < ys_b.size(); ++bj) {
      Rng rng = map_rng.child(block_tag++);
      const double x0 = xs_b[bi] + shrink, x1 = xs_b[bi + 1] - shrink;
      const double y0 = ys_b[bj] + shrink, y1 = ys_b[bj + 1] - shrink;
      if (x1 - x0 < 6.0 || y1 - y0 < 6.0) continue;
      const int n = config.buildings_per_block;
      const bool split_x = (x1 - x0) >= (y1 - y0);
      for (int s = 0; s < n; ++s) {
        // Slot bounds along the split axis keep buildings disjoint.
        const double lo = split_x ? x0 : y0, hi = split_x ? x1 : y1;
        const double slot0 = lo + (hi - lo) * s / n + 0.5;
        const double slot1 = lo + (hi - lo) * (s + 1) / n - 0.5;
        const double other0 = split_x ? y0 : x0, other1 = split_x ? y1 : x1;
        const double max_a = slot1 - slot0, max_b = other1 - other0;
        if (max_a < 5.0 || max_b < 5.0) continue;
        const double sa = rng.uniform(5.0, std::min(16.0, max_a));
        const double sb = rng.uniform(5.0, std::min(16.0, max_b));
        const double ca = rng.uniform(slot0 + 0.5 * sa, slot1 - 0.5 * sa);
        const double cb = rng.uniform(other0 + 0.5 * sb, other1 - 0.5 * sb);
        OrientedBox box;
        box.cx = split_x ? ca : cb;
        box.cy = split_x ? cb : ca;
        const double sx = split_x ? sa : sb, sy = split_x ? sb : sa;
        if (sx >= sy) {
          box.heading = 0.0;
          box.length = sx;
          box.width = sy;
        } else {
          box.heading = kPi / 2.0;
          box.length = sy;
          box.width = sx;
        }
        map.static_obstacles.push_back(box);
        map.obstacle_heights.push_back(rng.uniform(5.0, 10.0));
        map.obstacle_colors.push_back(
            hsv_to_quantized_rgb(rng.uniform(), rng.uniform(0.35, 0.75), rng.uniform(0.5, 0.9)));
      }
    }
  }

  return map;
}

void segment_point(const RoadSegment& seg, double s, Vec2* point, double* heading) {
  s = std::clamp(s, 0.0, seg.length());
  size_t i = 1;
  while (i + 1 < seg.cum_len.size() && seg.cum_len[i] < s) ++i;
  const Vec2& a = seg.pts[i - 1];
  const Vec2& b = seg.pts[i];
  const double piece = seg.cum_len[i] - seg.cum_len[i - 1];
  const double t = piece > 0.0 ? (s - seg.cum_len[i - 1]) / piece : 0.0;
  *point = a + t * (b - a);
  *heading = wrap_angle(std::atan2(b.y() - a.y(), b.x() - a.x()));
}

double segment_project(const RoadSegment& seg, const Vec2& p) {
  double best_d2 = 1e300, best_s = 0.0;
  for (size_t i = 1; i < seg.pts.size(); ++i) {
    const Vec2& a = seg.pts[i - 1];
    const Vec2& b = seg.pts[i];
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Vec2 q = a + t * ab;
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best_s = seg.cum_len[i - 1] + t * std::sqrt(len2);
    }
  }
  return best_s;
}

GroundKind classify_ground(const WorldMap& map, const Vec2& g) {
  double dx_min = 1e300, dy_min = 1e300;
  for (double x : map.street_xs) dx_min = std::min(dx_min, std::abs(g.x() - x));
  for (double y : map.street_ys) dy_min = std::min(dy_min, std::abs(g.y() - y));
  const double lw = map.lane_width;
  const bool on_v = dx_min <= lw, on_h = dy_min <= lw;
  if (on_v && on_h) return GroundKind::kIntersection;
  if (on_v) {
    if (dy_min > lw && dy_min <= lw + kStopBandDepth) return GroundKind::kStopLine;
    if (dx_min <= kMarkingHalfWidth) return GroundKind::kMarking;
    return GroundKind::kRoad;
  }
  if (on_h) {
    if (dx_min > lw && dx_min <= lw + kStopBandDepth) return GroundKind::kStopLine;
    if (dy_min <= kMarkingHalfWidth) return GroundKind::kMarking;
    return GroundKind::kRoad;
  }
  return GroundKind::kOffroad;
}

std::string serialize_map(const WorldMap& map) {
  std::ostringstream out;
  auto num = [&](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf << ' ';
  };
  out << "bounds ";
  num(map.bounds);
  out << "lane ";
  num(map.lane_width);
  out << "seed " << map.seed << '\n';
  out << "streets_x";
  for (double x : map.street_xs) { out << ' '; num(x); }
  out << "\nstreets_y";
  for (double y : map.street_ys) { out << ' '; num(y); }
  out << '\n';
  for (const RoadSegment& seg : map.segments) {
    out << (seg.is_connector ? "conn" : "lane");
    for (const Vec2& p : seg.pts) {
      out << ' ';
      num(p.x());
      num(p.y());
    }
    out << "next";
    for (int n : seg.next) out << ' ' << n;
    out << '\n';
  }
  for (const Intersection& junction : map.intersections) {
    out << "junction ";
    num(junction.center.x());
    num(junction.center.y());
    for (int id : junction.segment_ids) out << ' ' << id;
    out << '\n';
  }
  for (size_t i = 0; i < map.static_obstacles.size(); ++i) {
    const OrientedBox& b = map.static_obstacles[i];
    out << "building ";
    num(b.cx);
    num(b.cy);
    num(b.heading);
    num(b.length);
    num(b.width);
    num(map.obstacle_heights[i]);
    num(map.obstacle_colors[i].x());
    num(map.obstacle_colors[i].y());
    num(map.obstacle_colors[i].z());
    out << '\n';
  }
  return out.str();
}

}  // namespace latperc
