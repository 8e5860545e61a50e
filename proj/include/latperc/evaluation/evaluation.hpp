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

#ifndef LATPERC_EVALUATION_EVALUATION_HPP_
#define LATPERC_EVALUATION_EVALUATION_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "latperc/box.hpp"
#include "latperc/common.hpp"
#include "latperc/model/model.hpp"
#include "latperc/worldsim/episode.hpp"

namespace latperc {

/// How latents are read off the filtering posterior during a rollout.
enum class RolloutMode { kMean, kSample };

RolloutMode rollout_mode_from_string(const std::string& name);
std::string to_string(RolloutMode mode);

struct RolloutConfig {
  RolloutMode mode = RolloutMode::kMean;
  uint64_t seed = 0;  // noise stream for sample mode, one child per step
  // Decode-side constants. Candidates below the score floor never enter
  // the precision-recall pool; the floor keeps the all-background ocean
  // of cells from dominating evaluation time.
  double score_threshold = 0.01;
  double nms_iou = 0.5;
  double grid_res_m = 0.5;  // BEV resolution of the detection grid
  // Also decode camera and lidar reconstructions into each step, for
  // frame dumps. Off by default; it triples the rollout's image memory.
  bool decode_sensor_images = false;

  void validate() const;
};

/// Perception outputs decoded from one filtering step.
struct RolloutStep {
  std::vector<OrientedBox> boxes;  // ego frame, scored, NMS applied
  ImageF roadmap;
  Pose2 pose;            // global-frame estimate
  ImageF camera, lidar;  // filled only when decode_sensor_images is set
};

/// Causal filtering pass over one episode: posterior latents are updated
/// frame by frame and decoded to perception outputs. Output at step tau
/// depends only on frames 1..tau and actions 1..tau-1, so truncating the
/// episode after tau cannot change it.
std::vector<RolloutStep> filter_rollout(const LatentModelF& model, const Episode& episode,
                                        const RolloutConfig& config);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score = 0.0;  // detection score threshold producing this point
};

struct PrCurve {
  std::vector<PrPoint> points;  // descending score, recall non-decreasing
  double iou_threshold = 0.5;
  bool undefined = false;  // no ground truth: recall has no denominator
};

/// Pool scored detections across frames, match greedily against ground
/// truth (best IoU first, each truth box used once), and sweep the score
/// threshold over every distinct score.
PrCurve pr_curve(const std::vector<std::vector<OrientedBox>>& detections,
                 const std::vector<std::vector<OrientedBox>>& ground_truth, double iou_threshold);

/// Area under the precision envelope: precision at recall r is the best
/// precision achieved at any recall >= r. Empty or undefined curve -> 0.
double average_precision(const PrCurve& curve);

struct PoseErrors {
  double location_m = 0.0;
  double heading_rad = 0.0;
};

/// Mean Euclidean distance and mean absolute wrapped heading difference.
PoseErrors pose_errors(const std::vector<Pose2>& estimates, const std::vector<Pose2>& ground_truth);

struct EvalConfig {
  RolloutConfig rollout;
  std::vector<double> iou_thresholds = {0.1, 0.3, 0.5, 0.7};
  std::string variant_label = "full";
  // Episodes roll out independently against read-only parameters, so
  // they can fan out over threads; aggregation stays sequential and the
  // report does not depend on the worker count.
  int workers = 1;

  void validate() const;
};

struct EpisodeEval {
  int index = 0;
  int frames = 0;
  int detections = 0;
  int ground_truth = 0;
  PoseErrors pose;
  std::map<double, double> ap;  // this episode's frames only
};

struct EvalReport {
  std::map<double, double> ap;  // pooled over every frame of every episode
  std::map<double, PrCurve> curves;
  PoseErrors pose;
  std::vector<EpisodeEval> episodes;
  std::string variant_label;
  std::string mode;
};

/// Roll the model over every episode and aggregate detection and pose
/// metrics. Rollout failures are rethrown with the episode index.
EvalReport evaluate(const LatentModelF& model, const std::vector<Episode>& episodes,
                    const EvalConfig& config);

/// report.json next to one pr_curve_iou<t>.csv per threshold.
void write_eval_outputs(const EvalReport& report, const std::filesystem::path& out_dir);

/// 8-bit binary PPM with values clamped to [0, 1]. Used for frame dumps.
void write_ppm(const ImageF& image, const std::filesystem::path& path);

/// Camera | lidar | roadmap, observed row above decoded row. The step
/// must carry decoded sensor images (decode_sensor_images in the rollout
/// config).
ImageF compose_side_by_side(const ObservationFrame& observed, const RolloutStep& decoded);

}  // namespace latperc

#endif  // LATPERC_EVALUATION_EVALUATION_HPP_
