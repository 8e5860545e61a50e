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

#include <cmath>

#include "latperc/model/model.hpp"

namespace latperc {

Vec pose_to_target(const Pose2& pose, double pose_scale) {
  Vec t(4);
  t << pose.x / pose_scale, pose.y / pose_scale, std::cos(pose.yaw), std::sin(pose.yaw);
  return t;
}

Pose2 pose_from_target(const Vec& mean, double pose_scale) {
  if (mean.size() != 4) throw ContractError("pose_from_target: expected 4 values");
  return Pose2{mean(0) * pose_scale, mean(1) * pose_scale, std::atan2(mean(3), mean(2))};
}

}  // namespace latperc
