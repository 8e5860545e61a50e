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

#include <filesystem>
#include <string>
#include <vector>

#include "latperc/common.hpp"
#include "latperc/model/model.hpp"
#include "latperc/rng.hpp"
#include "latperc/worldsim/dataset.hpp"

namespace latperc {

/// Which reconstruction terms the objective keeps. Ablations drop whole
/// decoder subgraphs, so the dropped parameters see no gradient at all.
enum class Variant { kFull, kNoInputRecon, kNoRoadmapRecon };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-4;
  int sequence_length = 10;
  int total_iterations = 100000;
  Variant variant = Variant::kFull;
  uint64_t seed = 0;
  double grid_res_m = 0.5;     // detection target grid resolution
  double grad_clip_norm = 100.0;
  int checkpoint_every = 1000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

/// Mini-batch of training windows in time-major tensor form. Step tau of
/// every tensor holds all batch samples side by side: sample b occupies
/// columns [b * P, (b + 1) * P) of the image tensors (P = image_size^2)
/// and column b of the vector tensors.
template <typename S>
struct WindowBatch {
  int batch = 0;
  int length = 0;
  int image_size = 0;
  std::vector<MatX<S>> camera;    // length entries, 3 x (P * batch)
  std::vector<MatX<S>> lidar;     // 3 x (P * batch)
  std::vector<MatX<S>> roadmap;   // 3 x (P * batch)
  std::vector<MatX<S>> det_cls;   // 1 x (P * batch), 0/1 targets
  std::vector<MatX<S>> det_reg;   // 6 x (P * batch), zero outside positives
  std::vector<MatX<S>> det_mask;  // 6 x (P * batch), positive indicator rows
  std::vector<MatX<S>> pose;      // 4 x batch
  std::vector<MatX<S>> action;    // length - 1 entries, 2 x batch

  /// Throws ContractError when any tensor disagrees with the declared
  /// batch/length/image_size (ragged or mis-shaped input).
  void validate(int image_channels, int action_dim) const;
};

using WindowBatchF = WindowBatch<float>;
using WindowBatchD = WindowBatch<double>;

/// Uniform draw (with replacement) over all (episode, start) windows of
/// the requested length. Throws ConfigError when no episode is long
/// enough. Deterministic in the rng state.
WindowBatchF make_windows(const std::vector<StoredEpisode>& data, int batch, int length,
                          const GridSpec& grid, double pose_scale, Rng* rng);

/// Objective value split into its summands, each averaged over the batch.
/// total = camera + lidar + detection + roadmap + pose - kl_initial - kl_steps.
struct ElboReport {
  double total = 0.0;
  double camera_ll = 0.0;
  double lidar_ll = 0.0;
  double detection_ll = 0.0;
  double roadmap_ll = 0.0;
  double pose_ll = 0.0;
  double kl_initial = 0.0;
  double kl_steps = 0.0;
};

/// Tape node ids of the objective pieces; -1 marks a term the variant
/// removed from the graph. `loss` is -total, the node training descends.
struct ElboNodes {
  int camera = -1;
  int lidar = -1;
  int detection = -1;
  int roadmap = -1;
  int pose = -1;
  int kl_initial = -1;
  int kl_steps = -1;
  int total = -1;
  int loss = -1;
};

struct ElboResult {
  ElboNodes nodes;
  ElboReport report;
};

/// Unrolls the filtering posterior over the window and assembles the full
/// sequence objective on the graph's tape. `noise` supplies the external
/// standard-normal draws, one z_dim x batch matrix per step. Throws
/// ContractError on shape problems and NumericalError (naming the first
/// bad component) when any term comes out non-finite.
template <typename S>
ElboResult build_sequence_elbo(ModelGraph<S>& graph, const WindowBatch<S>& batch, Variant variant,
                               const std::vector<MatX<S>>& noise);

/// Standard-normal noise stack for one objective evaluation, one matrix
/// per window step, deterministic in the rng state.
template <typename S>
std::vector<MatX<S>> draw_elbo_noise(int length, int z_dim, int batch, Rng* rng);

/// Adam moment buffers, tensor-for-tensor parallel to the parameter store.
struct AdamState {
  nn::ParamStore<float> m;
  nn::ParamStore<float> v;
  int64_t step = 0;
};

/// Global-norm gradient clip followed by one Adam update. Tensors absent
/// from `grads` (ablated decoders) are treated as zero gradient.
void adam_update(nn::ParamStore<float>* params, const nn::ParamStore<float>& grads,
                 AdamState* state, const TrainConfig& cfg);

struct TrainResult {
  int iterations_completed = 0;
  ElboReport last_report;
  std::filesystem::path final_checkpoint;
};

/// Full training loop: draws window batches, ascends the objective with
/// Adam, appends one CSV row per iteration to <out>/train_log.csv, and
/// checkpoints every checkpoint_every iterations plus at the end. A run
/// directory holding checkpoints resumes exactly where it stopped. Throws
/// ConfigError for unusable inputs and RuntimeAbort after ten consecutive
/// non-finite iterations.
TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg,
                  const std::vector<StoredEpisode>& data, const std::filesystem::path& out_dir);

}  // namespace latperc
