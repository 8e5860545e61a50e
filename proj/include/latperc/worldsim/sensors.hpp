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

#include <vector>

#include "latperc/box.hpp"
#include "latperc/common.hpp"
#include "latperc/grid.hpp"
#include "latperc/worldsim/world.hpp"

namespace latperc {

/// Fixed render palette. Every color is on the u8 grid (n/255) so images
/// written as u8 read back bit-identically.
namespace palette {
Eigen::Vector3f rgb(int r, int g, int b);
inline Eigen::Vector3f sky() { return rgb(135, 206, 235); }
inline Eigen::Vector3f offroad() { return rgb(96, 128, 64); }
inline Eigen::Vector3f road() { return rgb(90, 90, 95); }
inline Eigen::Vector3f marking() { return rgb(230, 220, 80); }
inline Eigen::Vector3f intersection() { return rgb(120, 110, 130); }
inline Eigen::Vector3f stop_line() { return rgb(200, 60, 60); }
inline Eigen::Vector3f roadmap_background() { return rgb(40, 45, 40); }
}  // namespace palette

Eigen::Vector3f ground_color(GroundKind kind, bool roadmap_style);

/// 360-degree single-line lidar projected to the ego BEV grid. Red marks
/// the cell of the first above-ground hit along each beam (vehicles and
/// buildings), green marks drivable ground the beam crossed before that
/// hit. Nothing is written beyond a beam's first hit, which is what makes
/// occlusion real in the data.
ImageF render_lidar_bev(const WorldState& state, const GridSpec& grid, int beams);

/// Front camera: per-pixel rays from a flat-ground perspective model over
/// the shared ground palette, vehicle and building boxes drawn as colored
/// prisms. No lighting; flat colors keep the palette closed.
ImageF render_camera(const WorldState& state, const WorldConfig& config);

/// BEV semantic map around the ego: ground classes only, no vehicles.
ImageF render_roadmap(const WorldState& state, const GridSpec& grid);

/// Every non-ego vehicle whose center lies in the grid window, expressed
/// in the ego frame. Occluded vehicles are included on purpose.
std::vector<OrientedBox> ground_truth_boxes(const WorldState& state, const GridSpec& grid);

}  // namespace latperc
