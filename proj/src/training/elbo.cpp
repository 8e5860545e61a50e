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
#include <string>
#include <vector>

#include "latperc/maskcodec.hpp"
#include "latperc/training/training.hpp"

namespace latperc {

Variant variant_from_string(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "no-input" || name == "no_input_recon") return Variant::kNoInputRecon;
  if (name == "no-roadmap" || name == "no_roadmap_recon") return Variant::kNoRoadmapRecon;
  throw ConfigError("unknown variant '" + name + "'");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull:
      return "full";
    case Variant::kNoInputRecon:
      return "no_input_recon";
    case Variant::kNoRoadmapRecon:
      return "no_roadmap_recon";
  }
  throw ContractError("to_string: bad variant value");
}

void TrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("train config: batch_size must be positive");
  if (sequence_length <= 0) throw ConfigError("train config: sequence_length must be positive");
  if (total_iterations <= 0) throw ConfigError("train config: total_iterations must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
  if (!(grid_res_m > 0.0)) throw ConfigError("train config: grid_res_m must be positive");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("train config: grad_clip_norm must be positive");
  if (checkpoint_every <= 0) throw ConfigError("train config: checkpoint_every must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_eps > 0.0)) {
    throw ConfigError("train config: Adam constants out of range");
  }
}

template <typename S>
void WindowBatch<S>::validate(int image_channels, int action_dim) const {
  const auto n = static_cast<size_t>(length);
  if (batch <= 0 || length <= 0 || image_size <= 0) {
    throw ContractError("window batch: empty batch");
  }
  if (camera.size() != n || lidar.size() != n || roadmap.size() != n || det_cls.size() != n ||
      det_reg.size() != n || det_mask.size() != n || pose.size() != n ||
      action.size() != n - 1) {
    throw ContractError("window batch: ragged step counts");
  }
  const Eigen::Index pb = static_cast<Eigen::Index>(image_size) * image_size * batch;
  auto want = [&](const MatX<S>& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
      throw ContractError(std::string("window batch: ") + name + " is " +
                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                          ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
  };
  for (int tau = 0; tau < length; ++tau) {
    const auto i = static_cast<size_t>(tau);
    want(camera[i], image_channels, pb, "camera");
    want(lidar[i], image_channels, pb, "lidar");
    want(roadmap[i], image_channels, pb, "roadmap");
    want(det_cls[i], 1, pb, "det_cls");
    want(det_reg[i], 6, pb, "det_reg");
    want(det_mask[i], 6, pb, "det_mask");
    want(pose[i], 4, batch, "pose");
    if (tau + 1 < length) want(action[i], action_dim, batch, "action");
  }
}

template struct WindowBatch<float>;
template struct WindowBatch<double>;

WindowBatchF make_windows(const std::vector<StoredEpisode>& data, int batch, int length,
                          const GridSpec& grid, double pose_scale, Rng* rng) {
  // Cumulative window counts over episodes; a uniform index into the total
  // picks episode and start in one draw.
  std::vector<int64_t> cum(data.size() + 1, 0);
  for (size_t e = 0; e < data.size(); ++e) {
    const int64_t starts = std::max<int64_t>(0, data[e].frame_count - length + 1);
    cum[e + 1] = cum[e] + starts;
  }
  const int64_t total = cum.back();
  if (total == 0) {
    throw ConfigError("make_windows: no episode offers a window of length " +
                      std::to_string(length));
  }

  const int s = data.empty() ? 0 : data[0].image_size;
  const Eigen::Index pix = static_cast<Eigen::Index>(s) * s;
  WindowBatchF out;
  out.batch = batch;
  out.length = length;
  out.image_size = s;
  out.camera.assign(static_cast<size_t>(length), MatX<float>(3, pix * batch));
  out.lidar.assign(static_cast<size_t>(length), MatX<float>(3, pix * batch));
  out.roadmap.assign(static_cast<size_t>(length), MatX<float>(3, pix * batch));
  out.det_cls.assign(static_cast<size_t>(length), MatX<float>(1, pix * batch));
  out.det_reg.assign(static_cast<size_t>(length), MatX<float>(6, pix * batch));
  out.det_mask.assign(static_cast<size_t>(length), MatX<float>(6, pix * batch));
  out.pose.assign(static_cast<size_t>(length), MatX<float>(4, batch));
  out.action.assign(static_cast<size_t>(length - 1), MatX<float>(2, batch));

  for (int b = 0; b < batch; ++b) {
    const int64_t pick = static_cast<int64_t>(rng->uniform() * static_cast<double>(total)) %
                         total;  // uniform() < 1, the modulo only guards the edge
    size_t e = 0;
    while (cum[e + 1] <= pick) ++e;
    const auto start = static_cast<int>(pick - cum[e]);
    const StoredEpisode& ep = data[e];
    if (ep.image_size != s) {
      throw ConfigError("make_windows: episode image sizes disagree (" + std::to_string(s) +
                        " vs " + std::to_string(ep.image_size) + ")");
    }

    for (int tau = 0; tau < length; ++tau) {
      const int f = start + tau;
      const auto i = static_cast<size_t>(tau);
      out.camera[i].middleCols(b * pix, pix) = decode_image(ep.camera, s, f).planes;
      out.lidar[i].middleCols(b * pix, pix) = decode_image(ep.lidar, s, f).planes;
      out.roadmap[i].middleCols(b * pix, pix) = decode_image(ep.roadmap, s, f).planes;

      const DetectionMaskF mask = encode_boxes<float>(stored_boxes(ep, f), grid);
      out.det_cls[i].middleCols(b * pix, pix) = mask.cls;
      out.det_reg[i].middleCols(b * pix, pix) = mask.reg;
      out.det_mask[i].middleCols(b * pix, pix) = mask.cls.replicate(6, 1);
      // Regression targets only supervise positive cells.
      out.det_reg[i].middleCols(b * pix, pix).array() *=
          out.det_mask[i].middleCols(b * pix, pix).array();

      const Pose2 pose{ep.poses[static_cast<size_t>(f) * 3 + 0],
                       ep.poses[static_cast<size_t>(f) * 3 + 1],
                       ep.poses[static_cast<size_t>(f) * 3 + 2]};
      out.pose[i].col(b) = pose_to_target(pose, pose_scale).cast<float>();

      if (tau + 1 < length) {
        out.action[i](0, b) = ep.actions[static_cast<size_t>(f) * 2 + 0];
        out.action[i](1, b) = ep.actions[static_cast<size_t>(f) * 2 + 1];
      }
    }
  }
  return out;
}

template <typename S>
std::vector<MatX<S>> draw_elbo_noise(int length, int z_dim, int batch, Rng* rng) {
  std::vector<MatX<S>> noise(static_cast<size_t>(length));
  for (auto& m : noise) {
    m.resize(z_dim, batch);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = static_cast<S>(rng->normal());
    }
  }
  return noise;
}

template std::vector<MatX<float>> draw_elbo_noise<float>(int, int, int, Rng*);
template std::vector<MatX<double>> draw_elbo_noise<double>(int, int, int, Rng*);

namespace {

/// Batch-mean of a scalar node's value, 0 for absent nodes.
template <typename S>
double node_mean(const nn::Tape<S>& t, int node, int batch) {
  if (node < 0) return 0.0;
  return static_cast<double>(t.value(node)(0, 0)) / batch;
}

}  // namespace

template <typename S>
ElboResult build_sequence_elbo(ModelGraph<S>& graph, const WindowBatch<S>& batch, Variant variant,
                               const std::vector<MatX<S>>& noise) {
  const LatentModel<S>& model = graph.model();
  const ModelConfig& cfg = model.config();
  batch.validate(cfg.image_channels, cfg.action_dim);
  if (batch.image_size != cfg.image_size) {
    throw ContractError("sequence_elbo: window image size " + std::to_string(batch.image_size) +
                        " vs model " + std::to_string(cfg.image_size));
  }
  if (noise.size() != static_cast<size_t>(batch.length)) {
    throw ContractError("sequence_elbo: need one noise matrix per step");
  }
  for (const MatX<S>& n : noise) {
    if (n.rows() != cfg.z_dim() || n.cols() != batch.batch) {
      throw ContractError("sequence_elbo: noise must be z_dim x batch");
    }
  }

  nn::Tape<S>& t = graph.tape();
  const int B = batch.batch;
  const bool with_input = variant != Variant::kNoInputRecon;
  const bool with_roadmap = variant != Variant::kNoRoadmapRecon;

  ElboNodes nodes;
  std::vector<int> summands;  // reconstruction terms plus negated KLs
  auto accumulate = [&t](int* acc, int term) {
    *acc = (*acc < 0) ? term : nn::add(t, *acc, term);
  };

  int z = -1;
  for (int tau = 0; tau < batch.length; ++tau) {
    const auto i = static_cast<size_t>(tau);
    const int cam = nn::leaf(t, batch.camera[i]);
    const int lid = nn::leaf(t, batch.lidar[i]);
    const int feat = graph.encode(cam, lid, B);

    GaussNodes q;
    if (tau == 0) {
      q = graph.initial_posterior(feat);
      nodes.kl_initial = kl_standard_node(t, q);
    } else {
      const int a = nn::leaf(t, batch.action[i - 1]);
      q = graph.step_posterior(z, feat, a);
      const GaussNodes p = graph.step_prior(z, a);
      accumulate(&nodes.kl_steps, kl_node(t, q, p));
    }
    z = graph.sample(q, nn::leaf(t, noise[i]));

    if (with_input) {
      accumulate(&nodes.camera, image_ll_node(t, graph.decode_camera(z, B), cam, cfg.image_sigma));
      accumulate(&nodes.lidar, image_ll_node(t, graph.decode_lidar(z, B), lid, cfg.image_sigma));
    }
    if (with_roadmap) {
      accumulate(&nodes.roadmap, image_ll_node(t, graph.decode_roadmap(z, B),
                                               nn::leaf(t, batch.roadmap[i]), cfg.image_sigma));
    }
    const auto [cls, reg] = graph.decode_detection(z, B);
    accumulate(&nodes.detection,
               detection_ll_node(t, cls, reg, nn::leaf(t, batch.det_cls[i]),
                                 nn::leaf(t, batch.det_reg[i]), nn::leaf(t, batch.det_mask[i])));
    accumulate(&nodes.pose, gaussian_ll_node(t, graph.decode_pose(z), nn::leaf(t, batch.pose[i])));
  }

  for (const int n : {nodes.camera, nodes.lidar, nodes.detection, nodes.roadmap, nodes.pose}) {
    if (n >= 0) summands.push_back(n);
  }
  summands.push_back(nn::scale(t, nodes.kl_initial, S(-1)));
  if (nodes.kl_steps >= 0) summands.push_back(nn::scale(t, nodes.kl_steps, S(-1)));
  int acc = summands[0];
  for (size_t i = 1; i < summands.size(); ++i) acc = nn::add(t, acc, summands[i]);
  nodes.total = nn::scale(t, acc, S(1) / S(B));
  nodes.loss = nn::scale(t, nodes.total, S(-1));

  ElboResult res;
  res.nodes = nodes;
  res.report.camera_ll = node_mean(t, nodes.camera, B);
  res.report.lidar_ll = node_mean(t, nodes.lidar, B);
  res.report.detection_ll = node_mean(t, nodes.detection, B);
  res.report.roadmap_ll = node_mean(t, nodes.roadmap, B);
  res.report.pose_ll = node_mean(t, nodes.pose, B);
  res.report.kl_initial = node_mean(t, nodes.kl_initial, B);
  res.report.kl_steps = node_mean(t, nodes.kl_steps, B);
  res.report.total = static_cast<double>(t.value(nodes.total)(0, 0));

  const std::pair<const char*, double> checks[] = {
      {"camera_ll", res.report.camera_ll},   {"lidar_ll", res.report.lidar_ll},
      {"detection_ll", res.report.detection_ll}, {"roadmap_ll", res.report.roadmap_ll},
      {"pose_ll", res.report.pose_ll},       {"kl_initial", res.report.kl_initial},
      {"kl_steps", res.report.kl_steps},     {"total", res.report.total}};
  for (const auto& [name, value] : checks) {
    if (!std::isfinite(value)) {
      throw NumericalError(std::string("sequence_elbo: component ") + name + " is non-finite");
    }
  }
  return res;
}

template ElboResult build_sequence_elbo<float>(ModelGraph<float>&, const WindowBatch<float>&,
                                               Variant, const std::vector<MatX<float>>&);
template ElboResult build_sequence_elbo<double>(ModelGraph<double>&, const WindowBatch<double>&,
                                                Variant, const std::vector<MatX<double>>&);

}  // namespace latperc
