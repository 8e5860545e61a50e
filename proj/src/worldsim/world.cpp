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

#include "latperc/worldsim/world.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include "latperc/rng.hpp"

namespace latperc {

namespace {

constexpr double kCorridorHalfWidth = 2.2;  // lateral reach of leader search, m
constexpr double kLeaderRange = 25.0;       // how far ahead leaders matter, m
constexpr double kSpawnClearance = 7.0;     // center distance between spawns, m

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

/// Advance a route by a distance, drawing turn choices from the vehicle's
/// behavior stream whenever a segment with several successors ends.
void advance_route(const WorldMap& map, VehicleState* v, double dist) {
  double arc = v->route.arc + dist;
  int seg_id = v->route.segment;
  for (int guard = 0; guard < 16; ++guard) {
    const RoadSegment& seg = map.segments[static_cast<size_t>(seg_id)];
    if (arc <= seg.length()) break;
    if (seg.next.empty()) {
      arc = seg.length();
      break;
    }
    arc -= seg.length();
    int pick = 0;
    if (seg.next.size() > 1) {
      pick = Rng(v->behavior_seed)
                 .child(v->decisions_made++)
                 .uniform_int(static_cast<int>(seg.next.size()));
    }
    seg_id = seg.next[static_cast<size_t>(pick)];
  }
  v->route.segment = seg_id;
  v->route.arc = arc;
  Vec2 p;
  double heading = 0.0;
  segment_point(map.segments[static_cast<size_t>(seg_id)], arc, &p, &heading);
  v->pose = {p.x(), p.y(), heading};
}

}  // namespace

double gap_limited_speed(double gap, double cruise, const WorldConfig& config) {
  if (gap <= config.follow_stop_gap) return 0.0;
  if (gap < config.follow_slow_gap) {
    return cruise * (gap - config.follow_stop_gap) /
           (config.follow_slow_gap - config.follow_stop_gap);
  }
  return cruise;
}

double leader_gap(const WorldState& state, int vehicle_index, const WorldConfig& config) {
  (void)config;
  const VehicleState& self =
      vehicle_index < 0 ? state.ego : state.traffic[static_cast<size_t>(vehicle_index)];
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](const VehicleState& other) {
    const Vec2 local = self.pose.to_local({other.pose.x, other.pose.y});
    if (local.x() <= 0.0 || local.x() > kLeaderRange) return;
    if (std::abs(local.y()) > kCorridorHalfWidth) return;
    best = std::min(best, local.x() - 0.5 * self.length - 0.5 * other.length);
  };
  if (vehicle_index >= 0) consider(state.ego);
  for (size_t i = 0; i < state.traffic.size(); ++i) {
    if (static_cast<int>(i) == vehicle_index) continue;
    consider(state.traffic[i]);
  }
  return best;
}

void step_world(WorldState* state, const EgoAction& action, double dt, const WorldConfig& config) {
  if (!(dt > 0.0)) throw ContractError("step_world: dt must be positive");

  // Traffic decisions use the pre-step snapshot so update order is moot.
  struct Plan {
    double speed;
    double dist;
  };
  std::vector<Plan> plans(state->traffic.size());
  for (size_t i = 0; i < state->traffic.size(); ++i) {
    const VehicleState& v = state->traffic[i];
    const double gap = leader_gap(*state, static_cast<int>(i), config);
    const double desired = gap_limited_speed(gap, v.target_speed, config);
    const double dv = std::clamp(desired - v.speed, -config.max_accel * dt, config.max_accel * dt);
    plans[i].speed = std::clamp(v.speed + dv, 0.0, config.v_max);
    plans[i].dist = plans[i].speed * dt;
  }

  // Ego: kinematic bicycle, semi-implicit (speed, then yaw, then position).
  VehicleState& ego = state->ego;
  const double accel = clamp_unit(action.accel) * config.max_accel;
  const double wheel = clamp_unit(action.steer) * config.max_steer_rad;
  ego.speed = std::clamp(ego.speed + accel * dt, 0.0, config.v_max);
  ego.pose.yaw =
      wrap_angle(ego.pose.yaw + ego.speed / config.wheelbase_m * std::tan(wheel) * dt);
  const double half = state->map.half_bounds();
  ego.pose.x = std::clamp(ego.pose.x + ego.speed * std::cos(ego.pose.yaw) * dt, -half, half);
  ego.pose.y = std::clamp(ego.pose.y + ego.speed * std::sin(ego.pose.yaw) * dt, -half, half);

  for (size_t i = 0; i < state->traffic.size(); ++i) {
    state->traffic[i].speed = plans[i].speed;
    advance_route(state->map, &state->traffic[i], plans[i].dist);
  }
  state->time += dt;
}

WorldState spawn_world(const WorldMap& map, uint64_t seed, const WorldConfig& config) {
  config.validate();
  WorldState state;
  state.map = map;
  Rng rng(seed);

  std::vector<int> lanes;
  double total_len = 0.0;
  for (size_t i = 0; i < map.segments.size(); ++i) {
    if (!map.segments[i].is_connector) {
      lanes.push_back(static_cast<int>(i));
      total_len += map.segments[i].length();
    }
  }
  if (lanes.empty()) throw GenerationError("spawn_world: map has no lanes");

  std::vector<Vec2> placed;
  auto try_place = [&](VehicleState* v) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      double s = rng.uniform(0.0, total_len);
      int seg_id = lanes.back();
      for (int id : lanes) {
        const double len = map.segments[static_cast<size_t>(id)].length();
        if (s <= len) {
          seg_id = id;
          break;
        }
        s -= len;
      }
      Vec2 p;
      double heading = 0.0;
      const RoadSegment& seg = map.segments[static_cast<size_t>(seg_id)];
      const double arc = std::clamp(s, 0.0, seg.length());
      segment_point(seg, arc, &p, &heading);
      bool clear = true;
      for (const Vec2& q : placed) {
        if ((p - q).norm() < kSpawnClearance) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      v->pose = {p.x(), p.y(), heading};
      v->route = {seg_id, arc};
      placed.push_back(p);
      return true;
    }
    return false;
  };

  state.ego.length = config.ego_length;
  state.ego.width = config.ego_width;
  state.ego.speed = 0.0;
  state.ego.behavior_seed = rng.next_u64();
  if (!try_place(&state.ego)) {
    std::ostringstream msg;
    msg << "spawn_world: seed " << seed << ": no free lane cell for the ego vehicle";
    throw GenerationError(msg.str());
  }

  for (int i = 0; i < config.num_traffic; ++i) {
    VehicleState v;
    v.length = rng.uniform(config.vehicle_length_min, config.vehicle_length_max);
    v.width = rng.uniform(config.vehicle_width_min, config.vehicle_width_max);
    v.target_speed = rng.uniform(config.traffic_speed_min, config.traffic_speed_max);
    v.behavior_seed = rng.next_u64();
    v.color = hsv_to_quantized_rgb(rng.uniform(), rng.uniform(0.6, 0.9), rng.uniform(0.6, 0.95));
    if (!try_place(&v)) {
      std::ostringstream msg;
      msg << "spawn_world: seed " << seed << ": no free lane cell for traffic vehicle " << i;
      throw GenerationError(msg.str());
    }
    v.speed = 0.5 * v.target_speed;
    state.traffic.push_back(v);
  }
  return state;
}

}  // namespace latperc
