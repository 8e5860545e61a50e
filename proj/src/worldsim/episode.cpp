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

#include "latperc/worldsim/episode.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "latperc/rng.hpp"

namespace latperc {

namespace {

constexpr double kLookahead = 4.0;       // pure-pursuit target distance, m
constexpr uint64_t kControllerTag = 192; // rng stream for ego route choices

double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

// f32 rounding can push a wrapped angle just past pi (float(pi) > pi), so
// re-wrap in float until the stored value honors the (-pi, pi] contract.
double quantize_angle(double a) {
  float f = static_cast<float>(wrap_angle(a));
  for (int guard = 0; guard < 3 && (f > kPi || f <= -kPi); ++guard) {
    f = static_cast<float>(f > kPi ? f - 2.0 * kPi : f + 2.0 * kPi);
  }
  return static_cast<double>(f);
}

/// Pure-pursuit lane follower. Keeps a short plan of segment ids ahead of
/// the ego, extends it with seeded choices at junctions, and emits
/// (steer, accel) commands that the bicycle model then integrates.
class EgoController {
 public:
  EgoController(const WorldMap& map, const RouteState& start, Rng rng)
      : map_(map), rng_(rng), arc_(start.arc) {
    plan_.push_back(start.segment);
  }

  EgoAction drive(const WorldState& state, const WorldConfig& config) {
    const Vec2 pos{state.ego.pose.x, state.ego.pose.y};
    track(pos);
    extend_plan(arc_ + kLookahead + 2.0);
    const Vec2 target = point_along(arc_ + kLookahead);

    const Vec2 local = state.ego.pose.to_local(target);
    const double alpha = std::atan2(local.y(), local.x());
    const double curvature = 2.0 * std::sin(alpha) / kLookahead;
    const double wheel = std::atan(curvature * config.wheelbase_m);
    const double steer = std::clamp(wheel / config.max_steer_rad, -1.0, 1.0);

    const double gap = leader_gap(state, -1, config);
    double v_des = gap_limited_speed(gap, config.ego_cruise_speed, config);
    // Slow through tight turns so pure pursuit can hold the lane.
    v_des = std::min(v_des, config.ego_cruise_speed * (1.0 - 0.6 * std::min(1.0, std::abs(steer))) + 0.5);
    const double accel =
        std::clamp((v_des - state.ego.speed) / (config.max_accel * config.dt), -1.0, 1.0);

    // Quantize the emitted action so the stored f32 values are exactly the
    // ones the dynamics integrated.
    return EgoAction{quantize(steer), quantize(accel)};
  }

 private:
  const RoadSegment& seg(int id) const { return map_.segments[static_cast<size_t>(id)]; }

  // Project the ego onto the front of the plan, dropping finished segments.
  void track(const Vec2& pos) {
    for (int guard = 0; guard < 8; ++guard) {
      arc_ = segment_project(seg(plan_.front()), pos);
      if (arc_ < seg(plan_.front()).length() - 0.05) break;
      if (plan_.size() < 2) extend_plan(seg(plan_.front()).length() + 1.0);
      if (plan_.size() < 2) break;
      plan_.pop_front();
    }
  }

  // Make sure the plan covers at least `horizon` meters from the front
  // segment's origin, drawing junction choices in route order.
  void extend_plan(double horizon) {
    double covered = 0.0;
    for (int id : plan_) covered += seg(id).length();
    while (covered < horizon) {
      const RoadSegment& last = seg(plan_.back());
      if (last.next.empty()) break;
      int pick = 0;
      if (last.next.size() > 1) pick = rng_.uniform_int(static_cast<int>(last.next.size()));
      plan_.push_back(last.next[static_cast<size_t>(pick)]);
      covered += seg(plan_.back()).length();
    }
  }

  Vec2 point_along(double s) const {
    double remain = s;
    for (size_t i = 0; i < plan_.size(); ++i) {
      const RoadSegment& current = seg(plan_[i]);
      if (remain <= current.length() || i + 1 == plan_.size()) {
        Vec2 p;
        double heading = 0.0;
        segment_point(current, remain, &p, &heading);
        return p;
      }
      remain -= current.length();
    }
    return map_.segments.front().pts.back();
  }

  const WorldMap& map_;
  Rng rng_;
  std::deque<int> plan_;
  double arc_ = 0.0;
};

ObservationFrame record_frame(const WorldState& state, const WorldConfig& config) {
  const GridSpec grid = config.bev_grid();
  ObservationFrame frame;
  frame.camera = render_camera(state, config);
  frame.lidar_bev = render_lidar_bev(state, grid, config.lidar_beams);
  frame.roadmap = render_roadmap(state, grid);
  frame.ego_pose = {quantize(state.ego.pose.x), quantize(state.ego.pose.y),
                    quantize_angle(state.ego.pose.yaw)};
  for (const OrientedBox& b : ground_truth_boxes(state, grid)) {
    OrientedBox q = b;
    q.cx = quantize(b.cx);
    q.cy = quantize(b.cy);
    q.heading = quantize_angle(b.heading);
    q.length = quantize(b.length);
    q.width = quantize(b.width);
    q.score = 1.0;
    frame.gt_boxes.push_back(q);
  }
  return frame;
}

}  // namespace

Episode generate_episode(const WorldMap& world, uint64_t seed, int length,
                         const WorldConfig& config) {
  if (length < 2) throw ContractError("generate_episode: length must be at least 2");
  config.validate();

  WorldState state = spawn_world(world, seed, config);
  EgoController controller(state.map, state.ego.route, Rng(seed).child(kControllerTag));

  Episode episode;
  episode.seed = seed;
  episode.world_ref = world.seed;
  episode.frames.reserve(static_cast<size_t>(length));
  for (int t = 0; t < length; ++t) {
    episode.frames.push_back(record_frame(state, config));
    if (t + 1 == length) break;
    const EgoAction action = controller.drive(state, config);
    episode.actions.push_back(action);
    step_world(&state, action, config.dt, config);
  }
  return episode;
}

}  // namespace latperc
