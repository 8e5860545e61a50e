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

#include <cstdint>
#include <string>
#include <vector>

#include "latperc/box.hpp"
#include "latperc/common.hpp"
#include "latperc/worldsim/config.hpp"

namespace latperc {

/// One directed lane-center polyline. Lanes run between junctions (or a
/// junction and the map edge) offset to the right of travel; connectors
/// are the short pieces inside a junction (or the U-turn at a map edge)
/// that join an incoming lane to an outgoing one.
struct RoadSegment {
  std::vector<Vec2> pts;        // at least two points
  std::vector<double> cum_len;  // prefix arc length, cum_len.front() = 0
  std::vector<int> next;        // ids of segments reachable from the end
  double lane_width = 0.0;
  bool is_connector = false;

  double length() const { return cum_len.back(); }
};

/// A four-way street crossing.
struct Intersection {
  Vec2 center;
  std::vector<int> segment_ids;  // lanes that start or end at this junction
};

struct WorldMap {
  double bounds = 0.0;      // square side; coordinates span [-bounds/2, bounds/2]
  double lane_width = 0.0;  // per direction
  uint64_t seed = 0;        // build seed, doubles as the world identifier
  std::vector<double> street_xs;  // vertical street center x coordinates
  std::vector<double> street_ys;  // horizontal street center y coordinates
  std::vector<RoadSegment> segments;
  std::vector<Intersection> intersections;
  std::vector<OrientedBox> static_obstacles;     // buildings
  std::vector<double> obstacle_heights;          // meters, parallel to static_obstacles
  std::vector<Eigen::Vector3f> obstacle_colors;  // [0, 1] RGB, parallel

  double half_bounds() const { return 0.5 * bounds; }
};

/// Kinds of ground surface, shared by the roadmap and camera renderers.
enum class GroundKind { kOffroad, kRoad, kMarking, kIntersection, kStopLine };

/// Deterministic grid-town generator: axis-aligned two-way streets every
/// grid pitch, four-way junctions, and jittered colored buildings in the
/// blocks between them.
WorldMap build_world(uint64_t seed, const WorldConfig& config);

/// Point and forward direction at arc position s along a segment
/// (s clamped to [0, length]).
void segment_point(const RoadSegment& seg, double s, Vec2* point, double* heading);

/// Arc position of the closest point of the segment to p.
double segment_project(const RoadSegment& seg, const Vec2& p);

/// Surface class of a global point; pure geometry, no vehicles.
GroundKind classify_ground(const WorldMap& map, const Vec2& global_point);

/// HSV to RGB with every channel snapped to the u8 grid (n/255), so
/// rendered colors survive the on-disk u8 round trip bit-exactly.
Eigen::Vector3f hsv_to_quantized_rgb(double h, double s, double v);

/// Canonical text form of the full map, used for identity checks and
/// debugging. Doubles are printed with round-trip precision, so equal
/// strings mean bit-equal geometry.
std::string serialize_map(const WorldMap& map);

}  // namespace latperc
