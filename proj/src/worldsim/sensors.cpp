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

#include "latperc/worldsim/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace latperc {

namespace palette {
Eigen::Vector3f rgb(int r, int g, int b) {
  return {static_cast<float>(r / 255.0), static_cast<float>(g / 255.0),
          static_cast<float>(b / 255.0)};
}
}  // namespace palette

Eigen::Vector3f ground_color(GroundKind kind, bool roadmap_style) {
  switch (kind) {
    case GroundKind::kRoad: return palette::road();
    case GroundKind::kMarking: return palette::marking();
    case GroundKind::kIntersection: return palette::intersection();
    case GroundKind::kStopLine: return palette::stop_line();
    case GroundKind::kOffroad: break;
  }
  return roadmap_style ? palette::roadmap_background() : palette::offroad();
}

namespace {

OrientedBox vehicle_box(const VehicleState& v) {
  return {v.pose.x, v.pose.y, v.pose.yaw, v.length, v.width, 1.0};
}

/// First entry distance of the 2D ray o + t*d into an oriented rectangle,
/// or +infinity. Uses the slab test in the box frame.
double ray_box_2d(const Vec2& o, const Vec2& d, const OrientedBox& box) {
  const double c = std::cos(box.heading), s = std::sin(box.heading);
  const double ox = c * (o.x() - box.cx) + s * (o.y() - box.cy);
  const double oy = -s * (o.x() - box.cx) + c * (o.y() - box.cy);
  const double dx = c * d.x() + s * d.y();
  const double dy = -s * d.x() + c * d.y();
  double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
  const double lo[2] = {-0.5 * box.length, -0.5 * box.width};
  const double hi[2] = {0.5 * box.length, 0.5 * box.width};
  const double oo[2] = {ox, oy}, dd[2] = {dx, dy};
  for (int axis = 0; axis < 2; ++axis) {
    if (std::abs(dd[axis]) < 1e-12) {
      if (oo[axis] < lo[axis] || oo[axis] > hi[axis]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t1 = (lo[axis] - oo[axis]) / dd[axis];
    double t2 = (hi[axis] - oo[axis]) / dd[axis];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return std::numeric_limits<double>::infinity();
  }
  return tmin;
}

/// Entry distance of a 3D ray into a vertical prism (2D box extruded from
/// the ground to `height`), or +infinity.
double ray_prism(const Vec2& o, double oz, const Vec2& d, double dz, const OrientedBox& box,
                 double height) {
  const double c = std::cos(box.heading), s = std::sin(box.heading);
  const double ox = c * (o.x() - box.cx) + s * (o.y() - box.cy);
  const double oy = -s * (o.x() - box.cx) + c * (o.y() - box.cy);
  const double dx = c * d.x() + s * d.y();
  const double dy = -s * d.x() + c * d.y();
  double tmin = 1e-9, tmax = std::numeric_limits<double>::infinity();
  const double lo[3] = {-0.5 * box.length, -0.5 * box.width, 0.0};
  const double hi[3] = {0.5 * box.length, 0.5 * box.width, height};
  const double oo[3] = {ox, oy, oz}, dd[3] = {dx, dy, dz};
  for (int axis = 0; axis < 3; ++axis) {
    if (std::abs(dd[axis]) < 1e-12) {
      if (oo[axis] < lo[axis] || oo[axis] > hi[axis]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t1 = (lo[axis] - oo[axis]) / dd[axis];
    double t2 = (hi[axis] - oo[axis]) / dd[axis];
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
    if (tmin > tmax) return std::numeric_limits<double>::infinity();
  }
  return tmin;
}

}  // namespace

ImageF render_lidar_bev(const WorldState& state, const GridSpec& grid, int beams) {
  ImageF img(3, grid.size_px, grid.size_px);
  const Pose2& ego = state.ego.pose;
  const Vec2 origin{ego.x, ego.y};

  std::vector<OrientedBox> solids = state.map.static_obstacles;
  for (const VehicleState& v : state.traffic) solids.push_back(vehicle_box(v));

  const double range = grid.half_range() * std::sqrt(2.0) + grid.res_m;
  const double march = 0.5 * grid.res_m;
  for (int beam = 0; beam < beams; ++beam) {
    const double a = -kPi + (beam + 0.5) * 2.0 * kPi / beams;  // ego-frame angle
    const Vec2 dir_local{std::cos(a), std::sin(a)};
    const Vec2 dir = ego.to_global(dir_local) - origin;

    double t_hit = std::numeric_limits<double>::infinity();
    for (const OrientedBox& b : solids) t_hit = std::min(t_hit, ray_box_2d(origin, dir, b));

    // Ground returns strictly before the first solid hit.
    const double t_stop = std::min(t_hit, range);
    for (double t = march; t < t_stop; t += march) {
      const Vec2 local = dir_local * t;
      int row = 0, col = 0;
      grid.cell_of(local.x(), local.y(), &row, &col);
      if (!grid.in_cell_range(row, col)) continue;
      const GroundKind kind = classify_ground(state.map, origin + t * dir);
      if (kind != GroundKind::kOffroad) img.at(1, row, col) = 1.0f;
    }

    if (t_hit <= range) {
      // Nudge just inside the surface so the marked cell is the one the
      // obstacle actually occupies.
      const Vec2 local = dir_local * (t_hit + 1e-6);
      int row = 0, col = 0;
      grid.cell_of(local.x(), local.y(), &row, &col);
      if (grid.in_cell_range(row, col)) img.at(0, row, col) = 1.0f;
    }
  }
  return img;
}

ImageF render_camera(const WorldState& state, const WorldConfig& config) {
  const int size = config.image_size;
  ImageF img(3, size, size);
  const Pose2& ego = state.ego.pose;
  const Vec2 origin{ego.x, ego.y};
  const double half_tan = std::tan(0.5 * config.camera_fov_deg * kPi / 180.0);
  const double cam_h = config.camera_height_m;
  const double cy = std::cos(ego.yaw), sy = std::sin(ego.yaw);

  struct Prism {
    OrientedBox box;
    double height;
    Eigen::Vector3f color;
  };
  std::vector<Prism> prisms;
  for (size_t i = 0; i < state.map.static_obstacles.size(); ++i) {
    prisms.push_back(
        {state.map.static_obstacles[i], state.map.obstacle_heights[i], state.map.obstacle_colors[i]});
  }
  for (const VehicleState& v : state.traffic) prisms.push_back({vehicle_box(v), 1.5, v.color});

  for (int row = 0; row < size; ++row) {
    for (int col = 0; col < size; ++col) {
      const double u = (col + 0.5) / size * 2.0 - 1.0;  // left -> right
      const double v = 1.0 - (row + 0.5) / size * 2.0;  // bottom -> top
      // Ego frame: +x forward, +y left, +z up; u looks to the right.
      const double ex = 1.0, ey = -u * half_tan, ez = v * half_tan;
      const Vec2 dir{cy * ex - sy * ey, sy * ex + cy * ey};

      double t_best = std::numeric_limits<double>::infinity();
      Eigen::Vector3f color = palette::sky();
      if (ez < 0.0) {
        const double t_ground = -cam_h / ez;
        const double dist = t_ground * dir.norm();
        if (dist <= config.camera_view_dist_m) {
          t_best = t_ground;
          color = ground_color(classify_ground(state.map, origin + t_ground * dir), false);
        }
      }
      for (const Prism& prism : prisms) {
        const double t = ray_prism(origin, cam_h, dir, ez, prism.box, prism.height);
        if (t < t_best) {
          t_best = t;
          color = prism.color;
        }
      }
      img.at(0, row, col) = color.x();
      img.at(1, row, col) = color.y();
      img.at(2, row, col) = color.z();
    }
  }
  return img;
}

ImageF render_roadmap(const WorldState& state, const GridSpec& grid) {
  ImageF img(3, grid.size_px, grid.size_px);
  for (int row = 0; row < grid.size_px; ++row) {
    for (int col = 0; col < grid.size_px; ++col) {
      const Vec2 local = grid.cell_center(row, col);
      const Vec2 global = state.ego.pose.to_global(local);
      const Eigen::Vector3f color = ground_color(classify_ground(state.map, global), true);
      img.at(0, row, col) = color.x();
      img.at(1, row, col) = color.y();
      img.at(2, row, col) = color.z();
    }
  }
  return img;
}

std::vector<OrientedBox> ground_truth_boxes(const WorldState& state, const GridSpec& grid) {
  std::vector<OrientedBox> boxes;
  for (const VehicleState& v : state.traffic) {
    const Vec2 local = state.ego.pose.to_local({v.pose.x, v.pose.y});
    if (!grid.contains(local.x(), local.y())) continue;
    OrientedBox b;
    b.cx = local.x();
    b.cy = local.y();
    b.heading = wrap_angle(v.pose.yaw - state.ego.pose.yaw);
    b.length = v.length;
    b.width = v.width;
    b.score = 1.0;
    boxes.push_back(b);
  }
  return boxes;
}

}  // namespace latperc
