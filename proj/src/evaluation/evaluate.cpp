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

#include "latperc/evaluation/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "latperc/maskcodec.hpp"
#include "latperc/rng.hpp"

namespace latperc {

namespace {

/// Format an IoU threshold the way file names and report keys spell it.
std::string iou_key(double iou) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", iou);
  return buf;
}

}  // namespace

RolloutMode rollout_mode_from_string(const std::string& name) {
  if (name == "mean") return RolloutMode::kMean;
  if (name == "sample") return RolloutMode::kSample;
  throw ConfigError("rollout mode must be \"mean\" or \"sample\", got \"" + name + "\"");
}

std::string to_string(RolloutMode mode) {
  return mode == RolloutMode::kMean ? "mean" : "sample";
}

void RolloutConfig::validate() const {
  if (!(score_threshold > 0.0) || !(score_threshold < 1.0)) {
    throw ConfigError("rollout config: score_threshold must lie in (0, 1)");
  }
  if (!(nms_iou >= 0.0) || !(nms_iou <= 1.0)) {
    throw ConfigError("rollout config: nms_iou must lie in [0, 1]");
  }
  if (!(grid_res_m > 0.0)) {
    throw ConfigError("rollout config: grid_res_m must be positive");
  }
}

void EvalConfig::validate() const {
  rollout.validate();
  if (iou_thresholds.empty()) {
    throw ConfigError("eval config: need at least one IoU threshold");
  }
  for (const double iou : iou_thresholds) {
    if (!(iou > 0.0) || !(iou <= 1.0)) {
      throw ConfigError("eval config: IoU thresholds must lie in (0, 1]");
    }
  }
  if (workers < 1) {
    throw ConfigError("eval config: workers must be at least 1");
  }
}

std::vector<RolloutStep> filter_rollout(const LatentModelF& model, const Episode& episode,
                                        const RolloutConfig& config) {
  config.validate();
  if (episode.frames.empty()) {
    throw ContractError("filter_rollout: episode has no frames");
  }
  if (episode.actions.size() + 1 != episode.frames.size()) {
    std::ostringstream msg;
    msg << "filter_rollout: " << episode.frames.size() << " frames need "
        << episode.frames.size() - 1 << " actions, got " << episode.actions.size();
    throw ContractError(msg.str());
  }
  const ModelConfig& mc = model.config();
  for (const ObservationFrame& frame : episode.frames) {
    if (frame.camera.height != mc.image_size || frame.camera.width != mc.image_size ||
        frame.lidar_bev.height != mc.image_size || frame.lidar_bev.width != mc.image_size) {
      std::ostringstream msg;
      msg << "filter_rollout: episode frames are " << frame.camera.height << " px, model expects "
          << mc.image_size;
      throw ContractError(msg.str());
    }
  }

  const GridSpec grid{mc.image_size, config.grid_res_m};
  const Rng noise_root(config.seed);
  std::vector<RolloutStep> out;
  out.reserve(episode.frames.size());
  VecX<float> z;
  for (size_t tau = 0; tau < episode.frames.size(); ++tau) {
    const ObservationFrame& frame = episode.frames[tau];
    GaussianF q;
    if (tau == 0) {
      q = model.initial_posterior(frame.camera, frame.lidar_bev);
    } else {
      const EgoAction& prev = episode.actions[tau - 1];
      VecX<float> action(2);
      action << static_cast<float>(prev.steer), static_cast<float>(prev.accel);
      q = model.step_posterior(z, frame.camera, frame.lidar_bev, action);
    }
    if (config.mode == RolloutMode::kMean) {
      z = q.mean;
    } else {
      Rng step_noise = noise_root.child(tau);
      VecX<float> eps(q.dim());
      for (Eigen::Index i = 0; i < eps.size(); ++i) {
        eps(i) = static_cast<float>(step_noise.normal());
      }
      z = sample_gaussian(q, eps);
    }
    if (!z.allFinite()) {
      std::ostringstream msg;
      msg << "filter_rollout: non-finite latent at step " << tau;
      throw RuntimeAbort(msg.str());
    }

    RolloutStep step;
    const auto [cls, reg] = model.decode_detection(z);
    DetectionMaskF mask(grid);
    mask.cls = cls;
    mask.reg = reg;
    step.boxes = decode_mask(mask, config.score_threshold, config.nms_iou);
    step.roadmap = model.decode_roadmap(z);
    const Vec pose_mean = model.decode_pose(z).mean.cast<double>();
    step.pose = pose_from_target(pose_mean, mc.pose_scale);
    if (config.decode_sensor_images) {
      auto [camera, lidar] = model.decode_sensors(z);
      step.camera = std::move(camera);
      step.lidar = std::move(lidar);
    }
    out.push_back(std::move(step));
  }
  return out;
}

PrCurve pr_curve(const std::vector<std::vector<OrientedBox>>& detections,
                 const std::vector<std::vector<OrientedBox>>& ground_truth,
                 double iou_threshold) {
  if (detections.size() != ground_truth.size()) {
    std::ostringstream msg;
    msg << "pr_curve: " << detections.size() << " detection frames vs " << ground_truth.size()
        << " ground-truth frames";
    throw ContractError(msg.str());
  }
  PrCurve curve;
  curve.iou_threshold = iou_threshold;

  size_t total_gt = 0;
  for (const auto& frame : ground_truth) total_gt += frame.size();
  if (total_gt == 0) {
    curve.undefined = true;
    return curve;
  }

  struct Pooled {
    double score;
    size_t frame;
    size_t index;  // position within the frame, for a stable order
  };
  std::vector<Pooled> pool;
  for (size_t f = 0; f < detections.size(); ++f) {
    for (size_t i = 0; i < detections[f].size(); ++i) {
      pool.push_back(Pooled{detections[f][i].score, f, i});
    }
  }
  std::sort(pool.begin(), pool.end(), [](const Pooled& a, const Pooled& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.index < b.index;
  });

  // Greedy matching in score order: the best-overlapping unused truth
  // box wins, provided it clears the threshold.
  std::vector<std::vector<char>> gt_used(ground_truth.size());
  for (size_t f = 0; f < ground_truth.size(); ++f) gt_used[f].assign(ground_truth[f].size(), 0);
  std::vector<char> is_tp(pool.size(), 0);
  for (size_t d = 0; d < pool.size(); ++d) {
    const OrientedBox& det = detections[pool[d].frame][pool[d].index];
    const std::vector<OrientedBox>& gts = ground_truth[pool[d].frame];
    double best_iou = 0.0;
    int best = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[pool[d].frame][g]) continue;
      const double iou = rotated_iou(det, gts[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_threshold) {
      gt_used[pool[d].frame][best] = 1;
      is_tp[d] = 1;
    }
  }

  // One point per distinct score, taken after the last detection at
  // that score. Recall is non-decreasing because the pool is sorted.
  size_t tp = 0, fp = 0;
  for (size_t d = 0; d < pool.size(); ++d) {
    (is_tp[d] ? tp : fp) += 1;
    if (d + 1 < pool.size() && pool[d + 1].score == pool[d].score) continue;
    PrPoint point;
    point.score = pool[d].score;
    point.recall = static_cast<double>(tp) / static_cast<double>(total_gt);
    point.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    curve.points.push_back(point);
  }
  return curve;
}

double average_precision(const PrCurve& curve) {
  if (curve.undefined || curve.points.empty()) return 0.0;

  // Walk the points from the high-recall end keeping the running best
  // precision, so each recall segment is weighted by the envelope.
  std::vector<PrPoint> sorted = curve.points;
  std::sort(sorted.begin(), sorted.end(),
            [](const PrPoint& a, const PrPoint& b) { return a.recall < b.recall; });
  double ap = 0.0;
  double envelope = 0.0;
  double right = sorted.back().recall;
  for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) {
    envelope = std::max(envelope, it->precision);
    const double left = (std::next(it) == sorted.rend()) ? 0.0 : std::next(it)->recall;
    ap += envelope * (right - left);
    right = left;
  }
  return ap;
}

PoseErrors pose_errors(const std::vector<Pose2>& estimates,
                       const std::vector<Pose2>& ground_truth) {
  if (estimates.size() != ground_truth.size()) {
    std::ostringstream msg;
    msg << "pose_errors: " << estimates.size() << " estimates vs " << ground_truth.size()
        << " ground-truth poses";
    throw ContractError(msg.str());
  }
  if (estimates.empty()) {
    throw ContractError("pose_errors: empty pose sequences");
  }
  PoseErrors e;
  for (size_t i = 0; i < estimates.size(); ++i) {
    e.location_m += std::hypot(estimates[i].x - ground_truth[i].x,
                               estimates[i].y - ground_truth[i].y);
    e.heading_rad += std::abs(wrap_angle(estimates[i].yaw - ground_truth[i].yaw));
  }
  e.location_m /= static_cast<double>(estimates.size());
  e.heading_rad /= static_cast<double>(estimates.size());
  return e;
}

EvalReport evaluate(const LatentModelF& model, const std::vector<Episode>& episodes,
                    const EvalConfig& config) {
  config.validate();
  if (episodes.empty()) {
    throw ConfigError("evaluate: need at least one episode");
  }

  EvalReport report;
  report.variant_label = config.variant_label;
  report.mode = to_string(config.rollout.mode);

  struct PerEpisode {
    std::vector<std::vector<OrientedBox>> det, gt;
    std::vector<Pose2> est, truth;
    EpisodeEval summary;
  };
  std::vector<PerEpisode> results(episodes.size());
  const auto run_episode = [&](size_t e) {
    std::vector<RolloutStep> steps;
    try {
      steps = filter_rollout(model, episodes[e], config.rollout);
    } catch (const RuntimeAbort& abort) {
      std::ostringstream msg;
      msg << "evaluate: episode " << e << ": " << abort.what();
      throw RuntimeAbort(msg.str());
    }
    PerEpisode& r = results[e];
    r.summary.index = static_cast<int>(e);
    r.summary.frames = static_cast<int>(steps.size());
    for (size_t tau = 0; tau < steps.size(); ++tau) {
      r.det.push_back(steps[tau].boxes);
      r.gt.push_back(episodes[e].frames[tau].gt_boxes);
      r.est.push_back(steps[tau].pose);
      r.truth.push_back(episodes[e].frames[tau].ego_pose);
      r.summary.detections += static_cast<int>(steps[tau].boxes.size());
      r.summary.ground_truth += static_cast<int>(episodes[e].frames[tau].gt_boxes.size());
    }
    r.summary.pose = pose_errors(r.est, r.truth);
    for (const double iou : config.iou_thresholds) {
      r.summary.ap[iou] = average_precision(pr_curve(r.det, r.gt, iou));
    }
  };

  const int workers =
      std::max(1, std::min<int>(config.workers, static_cast<int>(episodes.size())));
  if (workers == 1) {
    for (size_t e = 0; e < episodes.size(); ++e) run_episode(e);
  } else {
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    const auto drain = [&]() {
      for (size_t e; (e = next.fetch_add(1)) < episodes.size() && !failed.load();) {
        try {
          run_episode(e);
        } catch (...) {
          const std::scoped_lock lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(drain);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  std::vector<std::vector<OrientedBox>> all_det, all_gt;
  std::vector<Pose2> all_est, all_true;
  for (PerEpisode& r : results) {
    report.episodes.push_back(std::move(r.summary));
    all_det.insert(all_det.end(), r.det.begin(), r.det.end());
    all_gt.insert(all_gt.end(), r.gt.begin(), r.gt.end());
    all_est.insert(all_est.end(), r.est.begin(), r.est.end());
    all_true.insert(all_true.end(), r.truth.begin(), r.truth.end());
  }

  report.pose = pose_errors(all_est, all_true);
  for (const double iou : config.iou_thresholds) {
    PrCurve curve = pr_curve(all_det, all_gt, iou);
    report.ap[iou] = average_precision(curve);
    report.curves[iou] = std::move(curve);
  }
  return report;
}

void write_eval_outputs(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  nlohmann::json json;
  json["variant"] = report.variant_label;
  json["mode"] = report.mode;
  json["location_error_m"] = report.pose.location_m;
  json["heading_error_rad"] = report.pose.heading_rad;
  nlohmann::json ap = nlohmann::json::object();
  for (const auto& [iou, value] : report.ap) ap[iou_key(iou)] = value;
  json["ap"] = ap;
  nlohmann::json episodes = nlohmann::json::array();
  for (const EpisodeEval& ep : report.episodes) {
    nlohmann::json entry;
    entry["index"] = ep.index;
    entry["frames"] = ep.frames;
    entry["detections"] = ep.detections;
    entry["ground_truth"] = ep.ground_truth;
    entry["location_error_m"] = ep.pose.location_m;
    entry["heading_error_rad"] = ep.pose.heading_rad;
    nlohmann::json ep_ap = nlohmann::json::object();
    for (const auto& [iou, value] : ep.ap) ep_ap[iou_key(iou)] = value;
    entry["ap"] = ep_ap;
    episodes.push_back(entry);
  }
  json["episodes"] = episodes;

  std::ofstream out(out_dir / "report.json");
  if (!out.good()) {
    throw RuntimeAbort("write_eval_outputs: cannot open " + (out_dir / "report.json").string());
  }
  out << json.dump(2) << "\n";

  for (const auto& [iou, curve] : report.curves) {
    const std::filesystem::path path = out_dir / ("pr_curve_iou" + iou_key(iou) + ".csv");
    std::ofstream csv(path);
    if (!csv.good()) {
      throw RuntimeAbort("write_eval_outputs: cannot open " + path.string());
    }
    csv << "score,recall,precision\n";
    char line[96];
    for (const PrPoint& p : curve.points) {
      std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g\n", p.score, p.recall, p.precision);
      csv << line;
    }
  }
}

ImageF compose_side_by_side(const ObservationFrame& observed, const RolloutStep& decoded) {
  if (decoded.camera.planes.size() == 0 || decoded.lidar.planes.size() == 0) {
    throw ContractError("compose_side_by_side: step carries no decoded sensor images");
  }
  const int h = observed.camera.height;
  const int w = observed.camera.width;
  ImageF out(3, 2 * h, 3 * w);
  const ImageF* tiles[2][3] = {
      {&observed.camera, &observed.lidar_bev, &observed.roadmap},
      {&decoded.camera, &decoded.lidar, &decoded.roadmap},
  };
  for (int tr = 0; tr < 2; ++tr) {
    for (int tc = 0; tc < 3; ++tc) {
      const ImageF& tile = *tiles[tr][tc];
      if (tile.height != h || tile.width != w || tile.channels() != 3) {
        throw ContractError("compose_side_by_side: tile shapes disagree");
      }
      for (int row = 0; row < h; ++row) {
        for (int col = 0; col < w; ++col) {
          for (int c = 0; c < 3; ++c) {
            out.at(c, tr * h + row, tc * w + col) = tile.at(c, row, col);
          }
        }
      }
    }
  }
  return out;
}

void write_ppm(const ImageF& image, const std::filesystem::path& path) {
  if (image.channels() != 3) {
    throw ContractError("write_ppm: expected a 3-channel image");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) {
    throw RuntimeAbort("write_ppm: cannot open " + path.string());
  }
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  for (int row = 0; row < image.height; ++row) {
    for (int col = 0; col < image.width; ++col) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(c, row, col), 0.0f, 1.0f);
        out.put(static_cast<char>(std::lround(v * 255.0f)));
      }
    }
  }
}

}  // namespace latperc
