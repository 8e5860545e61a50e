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
#include <vector>

#include "latperc/common.hpp"
#include "latperc/worldsim/map.hpp"

namespace latperc {

/// Ego control input; both channels live in [-1, 1] and are clamped on use.
/// steer scales the front wheel angle, accel the longitudinal acceleration
/// (negative values brake).
struct EgoAction {
  double steer = 0.0;
  double accel = 0.0;
};

/// Progress along the lane graph.
struct RouteState {
  int segment = -1;
  double arc = 0.0;
};

struct VehicleState {
  Pose2 pose;
  double speed = 0.0;
  double length = 4.5;
  double width = 2.0;
  RouteState route;            // traffic only; ego is driven by actions
  uint64_t behavior_seed = 0;  // stream for intersection choices
  uint64_t decisions_made = 0; // how many junction choices were drawn
  double target_speed = 0.0;   // traffic cruise speed
  Eigen::Vector3f color = {0.5f, 0.5f, 0.5f};
};

struct WorldState {
  WorldMap map;
  VehicleState ego;
  std::vector<VehicleState> traffic;
  double time = 0.0;
};

/// Advance the world by dt: ego follows the kinematic bicycle model (speed
/// update first, then yaw, then position, so a zero action is an exact
/// fixed point); traffic vehicles follow their lanes, brake behind leaders
/// and pick turns from their behavior streams. Pure function of its inputs:
/// identical (state, action, dt) always yields the identical next state.
void step_world(WorldState* state, const EgoAction& action, double dt, const WorldConfig& config);

/// Distance to the nearest other vehicle roughly ahead in the given
/// vehicle's travel corridor (bumper to bumper), or +infinity. Shared by
/// traffic and the scripted ego controller. vehicle_index -1 means ego.
double leader_gap(const WorldState& state, int vehicle_index, const WorldConfig& config);

/// Cruise speed reduced by the leader gap: zero inside the stop gap,
/// linear through the slow gap, full cruise beyond.
double gap_limited_speed(double gap, double cruise, const WorldConfig& config);

/// Place ego plus config.num_traffic vehicles on random lane positions with
/// clear spacing. Throws GenerationError naming the seed when the map has
/// no room left.
WorldState spawn_world(const WorldMap& map, uint64_t seed, const WorldConfig& config);

}  // namespace latperc
