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

#include "latperc/box.hpp"
#include "latperc/common.hpp"
#include "latperc/worldsim/sensors.hpp"
#include "latperc/worldsim/world.hpp"

namespace latperc {

/// One time step of recorded sensor data plus its supervision targets.
/// Numeric fields are quantized to f32 when the frame is recorded, so an
/// episode written to disk and read back compares deep-equal.
struct ObservationFrame {
  ImageF camera;
  ImageF lidar_bev;
  ImageF roadmap;
  Pose2 ego_pose;                    // global frame
  std::vector<OrientedBox> gt_boxes; // ego frame
};

struct Episode {
  std::vector<ObservationFrame> frames;
  std::vector<EgoAction> actions;  // actions.size() == frames.size() - 1
  uint64_t seed = 0;
  uint64_t world_ref = 0;          // build seed of the world it was driven in
};

/// Drive the scripted ego through a freshly spawned world for `length`
/// steps, recording every frame and the action taken between frames.
/// Deterministic in (world, seed, length, config).
Episode generate_episode(const WorldMap& world, uint64_t seed, int length,
                         const WorldConfig& config);

}  // namespace latperc
