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

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "latperc/training/training.hpp"

namespace latperc {

namespace {

namespace fs = std::filesystem;

// Sub-stream tags for the per-iteration random draws. Window picks and
// objective noise must come from distinct streams so changing the batch
// size never shifts the noise sequence.
constexpr uint64_t kStreamWindows = 1;
constexpr uint64_t kStreamNoise = 2;

std::string checkpoint_name(int iteration) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "checkpoint_%06d.ckpt", iteration);
  return buf;
}

/// Highest completed-iteration checkpoint in the directory, or empty.
fs::path find_latest_checkpoint(const fs::path& dir, int* iteration) {
  *iteration = 0;
  fs::path best;
  if (!fs::is_directory(dir)) return best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    int it = 0;
    if (std::sscanf(name.c_str(), "checkpoint_%d.ckpt", &it) == 1 && it > *iteration) {
      *iteration = it;
      best = entry.path();
    }
  }
  return best;
}

void ensure_moments(const nn::ParamStore<float>& params, AdamState* state) {
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = params.entry(i);
    if (!state->m.has(name)) {
      state->m.create(name, value.rows(), value.cols());
      state->v.create(name, value.rows(), value.cols());
    }
  }
}

void save_training_checkpoint(const fs::path& path, nn::ParamStore<float>& params,
                              AdamState& adam, const TrainConfig& cfg,
                              const ModelConfig& model_cfg, int completed) {
  std::map<std::string, int64_t> extra;
  extra["iteration"] = completed;
  extra["adam_step"] = adam.step;
  extra["variant"] = static_cast<int64_t>(cfg.variant);
  extra["image_size"] = model_cfg.image_size;
  extra["batch_size"] = cfg.batch_size;
  extra["sequence_length"] = cfg.sequence_length;
  extra["train_seed"] = static_cast<int64_t>(cfg.seed);
  // Lets eval rebuild the model geometry without the training dataset.
  extra["pose_scale_milli"] = std::llround(model_cfg.pose_scale * 1000.0);
  nn::save_checkpoint(path.string(),
                      {{"", &params}, {"adam.m.", &adam.m}, {"adam.v.", &adam.v}},
                      model_cfg.config_hash(), extra);
}

void append_csv_row(std::ofstream& csv, int iteration, const ElboReport& r, double wall_ms) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", iteration,
                r.total, r.camera_ll, r.lidar_ll, r.detection_ll, r.roadmap_ll, r.pose_ll,
                r.kl_initial, r.kl_steps, wall_ms);
  csv << buf;
  csv.flush();
}

}  // namespace

void adam_update(nn::ParamStore<float>* params, const nn::ParamStore<float>& grads,
                 AdamState* state, const TrainConfig& cfg) {
  ensure_moments(*params, state);

  double sq_norm = 0.0;
  for (size_t i = 0; i < grads.size(); ++i) {
    sq_norm += grads.entry(i).second.cast<double>().squaredNorm();
  }
  const double norm = std::sqrt(sq_norm);
  const float clip_scale =
      norm > cfg.grad_clip_norm ? static_cast<float>(cfg.grad_clip_norm / norm) : 1.0f;

  ++state->step;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state->step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state->step));
  const auto b1 = static_cast<float>(cfg.adam_beta1);
  const auto b2 = static_cast<float>(cfg.adam_beta2);
  const auto eps = static_cast<float>(cfg.adam_eps);
  const auto lr = static_cast<float>(cfg.learning_rate);

  for (size_t i = 0; i < params->size(); ++i) {
    auto& [name, p] = params->entry(i);
    MatX<float>& m = state->m.at(name);
    MatX<float>& v = state->v.at(name);
    if (grads.has(name)) {
      const MatX<float> g = grads.at(name) * clip_scale;
      m = b1 * m + (1.0f - b1) * g;
      v = b2 * v + (1.0f - b2) * g.cwiseProduct(g);
    } else {
      m *= b1;
      v *= b2;
    }
    const MatX<float> m_hat = m / static_cast<float>(bc1);
    const MatX<float> v_hat = v / static_cast<float>(bc2);
    p.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps);
  }
}

TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const std::vector<StoredEpisode>& data, const fs::path& out_dir) {
  cfg.validate();
  model_cfg.validate();
  if (data.empty()) throw ConfigError("train: dataset is empty");
  int64_t windows = 0;
  for (const StoredEpisode& ep : data) {
    if (ep.image_size != model_cfg.image_size) {
      throw ConfigError("train: episode image size " + std::to_string(ep.image_size) +
                        " does not match model input " + std::to_string(model_cfg.image_size));
    }
    windows += std::max(0, ep.frame_count - cfg.sequence_length + 1);
  }
  if (windows == 0) {
    throw ConfigError("train: no episode is long enough for sequence_length " +
                      std::to_string(cfg.sequence_length));
  }

  fs::create_directories(out_dir);
  nn::ParamStore<float> params;
  LatentModelF model(model_cfg, &params, cfg.seed);
  AdamState adam;
  ensure_moments(params, &adam);

  int completed = 0;
  const fs::path resume_path = find_latest_checkpoint(out_dir, &completed);
  if (!resume_path.empty()) {
    const auto extra = nn::load_checkpoint(
        resume_path.string(), {{"", &params}, {"adam.m.", &adam.m}, {"adam.v.", &adam.v}},
        model_cfg.config_hash());
    adam.step = extra.at("adam_step");
    completed = static_cast<int>(extra.at("iteration"));
    if (extra.at("variant") != static_cast<int64_t>(cfg.variant) ||
        extra.at("batch_size") != cfg.batch_size ||
        extra.at("sequence_length") != cfg.sequence_length ||
        extra.at("train_seed") != static_cast<int64_t>(cfg.seed)) {
      throw ConfigError("train: checkpoint " + resume_path.string() +
                        " was written by a run with different settings");
    }
  }

  TrainResult result;
  result.iterations_completed = completed;
  result.final_checkpoint = resume_path;
  if (completed >= cfg.total_iterations) return result;

  const fs::path csv_path = out_dir / "train_log.csv";
  std::ofstream csv(csv_path, completed > 0 ? std::ios::app : std::ios::trunc);
  if (!csv) throw RuntimeAbort("train: cannot open " + csv_path.string());
  if (completed == 0) {
    csv << "iter,total,camera_ll,lidar_ll,detection_ll,roadmap_ll,pose_ll,kl_initial,kl_steps,"
           "wall_ms\n";
  }

  const GridSpec grid{model_cfg.image_size, cfg.grid_res_m};
  const Rng window_root = Rng(cfg.seed).child(kStreamWindows);
  const Rng noise_root = Rng(cfg.seed).child(kStreamNoise);
  int consecutive_bad = 0;

  for (int iter = completed; iter < cfg.total_iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng window_rng = window_root.child(static_cast<uint64_t>(iter));
    Rng noise_rng = noise_root.child(static_cast<uint64_t>(iter));

    const WindowBatchF batch = make_windows(data, cfg.batch_size, cfg.sequence_length, grid,
                                            model_cfg.pose_scale, &window_rng);
    const auto noise =
        draw_elbo_noise<float>(cfg.sequence_length, model_cfg.z_dim(), cfg.batch_size, &noise_rng);

    ElboReport report;
    bool ok = true;
    std::string why;
    try {
      nn::TapeF tape;
      ModelGraph<float> graph(model, &tape);
      const ElboResult elbo = build_sequence_elbo(graph, batch, cfg.variant, noise);
      report = elbo.report;
      tape.backward(elbo.nodes.loss);
      nn::ParamStore<float> grads;
      graph.accumulate_param_grads(&grads);
      if (!grads.all_finite()) {
        ok = false;
        why = "gradients are non-finite";
      } else {
        adam_update(&params, grads, &adam, cfg);
      }
    } catch (const NumericalError& e) {
      ok = false;
      why = e.what();
      report = ElboReport{};
      report.total = std::numeric_limits<double>::quiet_NaN();
    }

    const auto t1 = std::chrono::steady_clock::now();
    const double wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    append_csv_row(csv, iter, report, wall_ms);

    if (!ok) {
      if (++consecutive_bad >= 10) {
        throw RuntimeAbort("train: aborted after 10 consecutive non-finite iterations (last: " +
                           why + ")");
      }
    } else {
      consecutive_bad = 0;
    }

    const int done = iter + 1;
    if (done % cfg.checkpoint_every == 0 || done == cfg.total_iterations) {
      const fs::path path = out_dir / checkpoint_name(done);
      save_training_checkpoint(path, params, adam, cfg, model_cfg, done);
      result.final_checkpoint = path;
    }
    result.iterations_completed = done;
    result.last_report = report;
  }
  return result;
}

}  // namespace latperc
