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

#include "latperc/common.hpp"
#include "latperc/grid.hpp"

namespace latperc {

/// All knobs of the synthetic world. Defaults describe the desk-scale
/// setup: a 200 m town with a 50 m street grid and 20 traffic vehicles
/// observed through 64 x 64 sensors.
struct WorldConfig {
  // Map layout.
  double bounds_m = 200.0;      // square side, centered at the origin
  double grid_pitch_m = 50.0;   // street spacing
  double lane_width_m = 4.0;    // per direction; full road is twice this
  int buildings_per_block = 2;
  double building_margin_m = 1.5;  // gap between road edge and buildings

  // Sensing.
  int image_size = 64;      // camera and BEV images are square
  double bev_res_m = 0.5;   // meters per BEV pixel
  int lidar_beams = 360;
  double camera_fov_deg = 90.0;
  double camera_height_m = 1.5;
  double camera_view_dist_m = 45.0;

  // Dynamics.
  double dt = 0.1;               // seconds per step
  double v_max = 10.0;           // hard speed cap, m/s
  double max_accel = 3.0;        // |accel| = 1 means this many m/s^2
  double max_steer_rad = 0.5;    // |steer| = 1 means this wheel angle
  double wheelbase_m = 2.7;

  // Population and behavior.
  int num_traffic = 20;
  double ego_cruise_speed = 5.0;        // m/s
  double traffic_speed_min = 3.0;       // target speed range, m/s
  double traffic_speed_max = 7.0;
  double vehicle_length_min = 3.8;
  double vehicle_length_max = 4.8;
  double vehicle_width_min = 1.7;
  double vehicle_width_max = 2.1;
  double ego_length = 4.5;
  double ego_width = 2.0;
  double follow_stop_gap = 4.0;   // full stop below this bumper gap, m
  double follow_slow_gap = 12.0;  // start slowing below this gap, m

  GridSpec bev_grid() const { return GridSpec{image_size, bev_res_m}; }

  void validate() const {
    if (!(bounds_m >= 2.0 * grid_pitch_m)) {
      throw ConfigError("world config: bounds must be at least twice the grid pitch");
    }
    if (!(grid_pitch_m > 4.0 * lane_width_m)) {
      throw ConfigError("world config: grid pitch leaves no room between roads");
    }
    if (!(lane_width_m > vehicle_width_max) || !(lane_width_m > ego_width)) {
      throw ConfigError("world config: lane width must exceed every vehicle width");
    }
    if (image_size < 8 || (image_size & (image_size - 1)) != 0) {
      throw ConfigError("world config: image_size must be a power of two, at least 8");
    }
    if (!(bev_res_m > 0.0) || !(dt > 0.0) || !(v_max > 0.0) || lidar_beams < 4) {
      throw ConfigError("world config: non-positive resolution, dt, v_max, or beam count");
    }
    if (!(vehicle_length_min <= vehicle_length_max) ||
        !(vehicle_width_min <= vehicle_width_max) ||
        !(traffic_speed_min <= traffic_speed_max)) {
      throw ConfigError("world config: empty sampling range");
    }
  }
};

}  // namespace latperc
