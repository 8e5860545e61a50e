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

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "latperc/common.hpp"
#include "latperc/nn/params.hpp"
#include "latperc/nn/tape.hpp"

namespace latperc {

/// One stride-2 stage of the convolutional encoder (channels, kernel).
struct ConvStage {
  int ch = 0;
  int k = 3;
};

/// Hyperparameters of the sequential latent model. The decoder stacks are
/// derived by mirroring the encoder, so only the encoder shape is stored.
struct ModelConfig {
  int image_size = 64;
  int image_channels = 3;
  std::vector<ConvStage> conv_stack = {{32, 5}, {64, 3}, {128, 3}, {256, 3}};
  int feature_k = 4;    // final valid conv: spatial size left after the stack
  int feature_dim = 256;
  int hidden = 256;
  int z1_dim = 32;
  int z2_dim = 256;
  int action_dim = 2;
  std::vector<int> det_stack = {128, 64, 32};  // trunk channels after the 1x1 -> 4x4 stage
  int det_head_k = 5;
  double image_sigma = 0.1;
  double leak = 0.2;
  double log_std_min = -10.0;
  double log_std_max = 3.0;
  double pose_scale = 100.0;  // meters per unit of the normalized pose target

  int z_dim() const { return z1_dim + z2_dim; }

  /// Full-size model for a given image resolution: the 128 px reference
  /// stack loses one stride-2 stage per halving below 128.
  static ModelConfig standard(int image_size, double map_bounds);
  /// Tiny configuration for finite-difference gradient checks.
  static ModelConfig miniature();

  void validate() const;
  /// Canonical key=value serialization; the checkpoint hash is FNV-1a over
  /// this string, so field order here is part of the format.
  std::string canonical() const;
  uint64_t config_hash() const;
};

/// Diagonal Gaussian over a vector, parameterized by mean and log standard
/// deviation (clamped at the producing network's output layer).
template <typename S>
struct Gaussian {
  VecX<S> mean;
  VecX<S> log_std;
  int dim() const { return static_cast<int>(mean.size()); }
};

using GaussianF = Gaussian<float>;
using GaussianD = Gaussian<double>;

/// z = mean + exp(log_std) * noise, the reparameterized sample.
template <typename S>
VecX<S> sample_gaussian(const Gaussian<S>& g, const VecX<S>& noise) {
  if (noise.size() != g.mean.size()) {
    throw ContractError("sample_gaussian: noise dim " + std::to_string(noise.size()) +
                        " vs parameter dim " + std::to_string(g.mean.size()));
  }
  return g.mean + g.log_std.array().exp().matrix().cwiseProduct(noise);
}

/// Closed-form KL divergence between diagonal Gaussians, summed over dims.
template <typename S>
double kl_divergence(const Gaussian<S>& q, const Gaussian<S>& p) {
  if (q.mean.size() != p.mean.size()) {
    throw ContractError("kl_divergence: dims " + std::to_string(q.mean.size()) + " vs " +
                        std::to_string(p.mean.size()));
  }
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.mean.size(); ++i) {
    const double lq = q.log_std(i), lp = p.log_std(i);
    const double dm = static_cast<double>(q.mean(i)) - static_cast<double>(p.mean(i));
    kl += lp - lq + 0.5 * (std::exp(2.0 * (lq - lp)) + dm * dm * std::exp(-2.0 * lp)) - 0.5;
  }
  return kl;
}

/// Sum of per-pixel Gaussian log-densities at fixed sigma.
template <typename S>
double log_likelihood_image(const MatX<S>& x, const MatX<S>& mean, double sigma) {
  if (x.rows() != mean.rows() || x.cols() != mean.cols()) {
    throw ContractError("log_likelihood_image: shape mismatch");
  }
  const double n = static_cast<double>(x.size());
  const double sq = (x - mean).template cast<double>().squaredNorm();
  return -0.5 * sq / (sigma * sigma) + n * (-std::log(sigma) - 0.5 * std::log(2.0 * kPi));
}

/// Bernoulli log-likelihood over every classification cell plus a unit
/// Gaussian log-likelihood over regression channels at ground-truth-positive
/// cells. `cls_prob` holds probabilities; targets are 0/1.
template <typename S>
double log_likelihood_detection(const MatX<S>& cls_target, const MatX<S>& reg_target,
                                const MatX<S>& cls_prob, const MatX<S>& reg_mean) {
  if (cls_target.rows() != cls_prob.rows() || cls_target.cols() != cls_prob.cols() ||
      reg_target.rows() != reg_mean.rows() || reg_target.cols() != reg_mean.cols() ||
      cls_target.cols() != reg_target.cols()) {
    throw ContractError("log_likelihood_detection: shape mismatch");
  }
  double ll = 0.0;
  for (Eigen::Index i = 0; i < cls_target.cols(); ++i) {
    const double t = cls_target(0, i);
    const double p = cls_prob(0, i);
    ll += t * std::log(p) + (1.0 - t) * std::log1p(-p);
    if (t > 0.5) {
      const double sq =
          (reg_mean.col(i) - reg_target.col(i)).template cast<double>().squaredNorm();
      ll += -0.5 * sq - 0.5 * static_cast<double>(reg_target.rows()) * std::log(2.0 * kPi);
    }
  }
  return ll;
}

/// Diagonal-Gaussian log-density of a 4-dim pose target.
template <typename S>
double log_likelihood_pose(const VecX<S>& target, const Gaussian<S>& decoded) {
  if (target.size() != decoded.mean.size()) throw ContractError("log_likelihood_pose: dims");
  double ll = 0.0;
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    const double m = decoded.mean(i), l = decoded.log_std(i);
    const double d = static_cast<double>(target(i)) - m;
    ll += -l - 0.5 * std::log(2.0 * kPi) - 0.5 * d * d * std::exp(-2.0 * l);
  }
  return ll;
}

/// Map a global pose to the 4-dim decoder target (x, y normalized by the
/// map half-extent; heading as cosine/sine).
Vec pose_to_target(const Pose2& pose, double pose_scale);
/// Invert pose_to_target on a decoded mean; the (cos, sin) pair is
/// normalized through atan2, so it need not be unit length.
Pose2 pose_from_target(const Vec& mean, double pose_scale);

template <typename S>
class LatentModel;

/// Tape-facing Gaussian: mean and clamped log-std node ids, each D x B.
struct GaussNodes {
  int mean = -1;
  int log_std = -1;
};

/// Per-tape view of a model: parameters are pushed once as leaves, graph
/// builders then reuse those nodes so gradients accumulate across time
/// steps. Build one per tape, never share across tapes.
template <typename S>
class ModelGraph {
 public:
  ModelGraph(const LatentModel<S>& model, nn::Tape<S>* tape);

  nn::Tape<S>& tape() const { return *tape_; }
  const LatentModel<S>& model() const { return *model_; }
  int param(const std::string& name) const;

  /// Encode both sensor streams (each image_channels x (HW * B)) into
  /// concatenated features, 2 * feature_dim x B.
  int encode(int camera, int lidar, int batch);
  GaussNodes initial_posterior(int features);
  GaussNodes step_posterior(int z, int features, int action);
  GaussNodes step_prior(int z, int action);
  int sample(const GaussNodes& g, int noise);

  int decode_camera(int z, int batch) { return decode_image_stack("dec_cam", z, batch); }
  int decode_lidar(int z, int batch) { return decode_image_stack("dec_lidar", z, batch); }
  int decode_roadmap(int z, int batch) { return decode_image_stack("dec_road", z, batch); }
  /// Returns (cls logits 1 x (P * B), reg means 6 x (P * B)).
  std::pair<int, int> decode_detection(int z, int batch);
  GaussNodes decode_pose(int z);

  /// Add d(root)/d(param) into a store with the same tensor names.
  void accumulate_param_grads(nn::ParamStore<S>* grads) const;

 private:
  GaussNodes gaussian_mlp(const std::string& prefix, int input, int out_dim);
  int encode_stream(const std::string& prefix, int image, int batch);
  int decode_image_stack(const std::string& prefix, int z, int batch);

  const LatentModel<S>* model_;
  nn::Tape<S>* tape_;
  std::vector<std::pair<std::string, int>> param_ids_;
  std::map<std::string, int> param_index_;
};

/// The sequential latent-variable model: two convolutional sensor encoders,
/// filtering posteriors, a latent transition prior, and four decoder heads.
/// Owns the architecture; weights live in an external ParamStore.
template <typename S>
class LatentModel {
 public:
  /// Binds to `store`. An empty store is populated and initialized from
  /// `init_seed`; a pre-populated store is validated against the config.
  LatentModel(const ModelConfig& config, nn::ParamStore<S>* store, uint64_t init_seed = 0);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore<S>& params() const { return *store_; }

  const std::vector<nn::ConvGeom>& encoder_geoms() const { return enc_geoms_; }
  const std::vector<nn::ConvGeom>& detection_geoms() const { return det_geoms_; }
  const nn::ConvGeom& detection_cls_geom() const { return det_cls_geom_; }
  const nn::ConvGeom& detection_reg_geom() const { return det_reg_geom_; }

  /// Convenience single-frame operations. Each builds a throwaway tape.
  VecX<S> encode_frame(const Image<S>& camera, const Image<S>& lidar) const;
  Gaussian<S> initial_posterior(const Image<S>& camera, const Image<S>& lidar) const;
  Gaussian<S> step_posterior(const VecX<S>& z, const Image<S>& camera, const Image<S>& lidar,
                             const VecX<S>& action) const;
  Gaussian<S> initial_prior() const;
  Gaussian<S> step_prior(const VecX<S>& z, const VecX<S>& action) const;
  std::pair<Image<S>, Image<S>> decode_sensors(const VecX<S>& z) const;
  Image<S> decode_roadmap(const VecX<S>& z) const;
  /// cls as sigmoid probabilities (1 x P), reg raw means (6 x P).
  std::pair<MatX<S>, MatX<S>> decode_detection(const VecX<S>& z) const;
  Gaussian<S> decode_pose(const VecX<S>& z) const;

 private:
  friend class ModelGraph<S>;
  void register_params(uint64_t seed);
  void check_image(const Image<S>& img, const char* what) const;
  Gaussian<S> gauss_from_nodes(const nn::Tape<S>& t, const GaussNodes& g) const;

  ModelConfig cfg_;
  nn::ParamStore<S>* store_;
  std::vector<nn::ConvGeom> enc_geoms_;  // stack stages, then the valid feature conv
  std::vector<nn::ConvGeom> det_geoms_;  // 1x1 -> 4x4 stage, then stride-2 trunk stages
  nn::ConvGeom det_cls_geom_;
  nn::ConvGeom det_reg_geom_;
};

using LatentModelF = LatentModel<float>;
using LatentModelD = LatentModel<double>;

extern template class ModelGraph<float>;
extern template class ModelGraph<double>;
extern template class LatentModel<float>;
extern template class LatentModel<double>;

/// Graph-side density assemblies used by the training objective. Each
/// returns a scalar (1x1) node summing over every entry handed in.

/// KL(q || p) for diagonal Gaussians given as tape nodes.
template <typename S>
int kl_node(nn::Tape<S>& t, const GaussNodes& q, const GaussNodes& p) {
  const int diff = nn::sub(t, q.mean, p.mean);
  const int e_ratio = nn::exp_op(t, nn::scale(t, nn::sub(t, q.log_std, p.log_std), S(2)));
  const int inv_var_p = nn::exp_op(t, nn::scale(t, p.log_std, S(-2)));
  const int quad = nn::mul_elem(t, nn::mul_elem(t, diff, diff), inv_var_p);
  const int inner = nn::affine(t, nn::add(t, e_ratio, quad), S(0.5), S(-0.5));
  const int per_dim = nn::add(t, nn::sub(t, p.log_std, q.log_std), inner);
  return nn::sum_all(t, per_dim);
}

/// KL(q || N(0, I)).
template <typename S>
int kl_standard_node(nn::Tape<S>& t, const GaussNodes& q) {
  const int var = nn::exp_op(t, nn::scale(t, q.log_std, S(2)));
  const int quad = nn::mul_elem(t, q.mean, q.mean);
  const int inner = nn::affine(t, nn::add(t, var, quad), S(0.5), S(-0.5));
  const int per_dim = nn::sub(t, inner, q.log_std);
  return nn::sum_all(t, per_dim);
}

/// Fixed-sigma Gaussian image log-likelihood of a constant target.
template <typename S>
int image_ll_node(nn::Tape<S>& t, int mean, int target, double sigma) {
  const int diff = nn::sub(t, mean, target);
  const int sq = nn::sum_all(t, nn::mul_elem(t, diff, diff));
  const double n = static_cast<double>(t.value(target).size());
  const double c = -std::log(sigma) - 0.5 * std::log(2.0 * kPi);
  return nn::affine(t, sq, S(-0.5 / (sigma * sigma)), S(n * c));
}

/// Bernoulli-from-logits plus masked unit-Gaussian regression terms.
/// `reg_mask` replicates the positive-cell indicator across reg rows.
template <typename S>
int detection_ll_node(nn::Tape<S>& t, int cls_logits, int reg_mean, int cls_target, int reg_target,
                      int reg_mask) {
  const int bern_pos = nn::sum_all(t, nn::mul_elem(t, cls_target, cls_logits));
  const int bern_all = nn::sum_all(t, nn::softplus(t, cls_logits));
  const int bern = nn::sub(t, bern_pos, bern_all);
  const int diff = nn::sub(t, reg_mean, reg_target);
  const int masked_sq = nn::mul_elem(t, nn::mul_elem(t, diff, diff), reg_mask);
  const double n_pos_terms = static_cast<double>(t.value(reg_mask).sum());
  const int reg =
      nn::affine(t, nn::sum_all(t, masked_sq), S(-0.5), S(-0.5 * std::log(2.0 * kPi) * n_pos_terms));
  return nn::add(t, bern, reg);
}

/// Diagonal-Gaussian log-likelihood with learned (node) parameters.
template <typename S>
int gaussian_ll_node(nn::Tape<S>& t, const GaussNodes& g, int target) {
  const int diff = nn::sub(t, target, g.mean);
  const int inv_var = nn::exp_op(t, nn::scale(t, g.log_std, S(-2)));
  const int quad = nn::scale(t, nn::mul_elem(t, nn::mul_elem(t, diff, diff), inv_var), S(-0.5));
  const int per_dim = nn::sub(t, quad, g.log_std);
  const double n = static_cast<double>(t.value(target).size());
  return nn::affine(t, nn::sum_all(t, per_dim), S(1), S(-0.5 * std::log(2.0 * kPi) * n));
}

}  // namespace latperc
