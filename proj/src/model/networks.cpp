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

#include "latperc/model/model.hpp"

#include <cinttypes>
#include <cstdio>
#include <functional>

namespace latperc {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ModelConfig ModelConfig::standard(int image_size, double map_bounds) {
  // Reference stacks are sized for 128 px input; each halving below that
  // drops one stride-2 stage (from the deep end for the encoder, from the
  // wide end for the detection trunk) so the bottleneck stays at feature_k.
  const std::vector<ConvStage> ref_conv = {{32, 5}, {64, 3}, {128, 3}, {256, 3}, {256, 3}};
  const std::vector<int> ref_det = {256, 128, 64, 32};

  int drops = 0;
  for (int s = image_size; s > 0 && s < 128; s *= 2) ++drops;
  if (image_size < 8 || drops >= static_cast<int>(ref_conv.size())) {
    throw ConfigError("ModelConfig::standard: unsupported image size " +
                      std::to_string(image_size));
  }

  ModelConfig c;
  c.image_size = image_size;
  c.conv_stack.assign(ref_conv.begin(), ref_conv.end() - drops);
  c.det_stack.assign(ref_det.begin() + std::min<size_t>(drops, ref_det.size()), ref_det.end());
  c.pose_scale = 0.5 * map_bounds;
  c.validate();
  return c;
}

ModelConfig ModelConfig::miniature() {
  ModelConfig c;
  c.image_size = 8;
  c.conv_stack = {{4, 5}};
  c.feature_dim = 8;
  c.hidden = 8;
  c.z1_dim = 2;
  c.z2_dim = 2;
  c.det_stack = {};
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  if (image_size <= 0 || image_channels <= 0 || feature_dim <= 0 || hidden <= 0 || z1_dim <= 0 ||
      z2_dim <= 0 || action_dim <= 0 || feature_k <= 0) {
    throw ConfigError("ModelConfig: all dimensions must be positive");
  }
  if (conv_stack.empty()) throw ConfigError("ModelConfig: empty conv stack");
  int s = image_size;
  for (const ConvStage& st : conv_stack) {
    if (st.ch <= 0 || st.k <= 0 || st.k % 2 == 0) {
      throw ConfigError("ModelConfig: conv stages need positive channels and odd kernels");
    }
    if (s % 2 != 0) throw ConfigError("ModelConfig: conv stack does not halve cleanly");
    s /= 2;
  }
  if (s != feature_k) {
    throw ConfigError("ModelConfig: conv stack leaves " + std::to_string(s) +
                      " px, feature conv wants " + std::to_string(feature_k));
  }
  int d = feature_k;
  for (int ch : det_stack) {
    if (ch <= 0) throw ConfigError("ModelConfig: detection trunk channels must be positive");
    d *= 2;
  }
  if (det_head_k <= 0 || det_head_k % 2 == 0) {
    throw ConfigError("ModelConfig: detection head kernel must be odd");
  }
  if (d * 2 != image_size) {
    throw ConfigError("ModelConfig: detection trunk reaches " + std::to_string(d * 2) +
                      " px, grid is " + std::to_string(image_size));
  }
  if (image_sigma <= 0.0) throw ConfigError("ModelConfig: image sigma must be positive");
  if (leak < 0.0 || leak >= 1.0) throw ConfigError("ModelConfig: leak outside [0, 1)");
  if (!(log_std_min < log_std_max)) throw ConfigError("ModelConfig: log-std bounds inverted");
  if (pose_scale <= 0.0) throw ConfigError("ModelConfig: pose scale must be positive");
}

std::string ModelConfig::canonical() const {
  std::string s = "image_size=" + std::to_string(image_size) +
                  ";image_channels=" + std::to_string(image_channels) + ";conv=";
  for (size_t i = 0; i < conv_stack.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(conv_stack[i].ch) + "x" + std::to_string(conv_stack[i].k);
  }
  s += ";feature_k=" + std::to_string(feature_k) + ";feature_dim=" + std::to_string(feature_dim) +
       ";hidden=" + std::to_string(hidden) + ";z1=" + std::to_string(z1_dim) +
       ";z2=" + std::to_string(z2_dim) + ";action=" + std::to_string(action_dim) + ";det=";
  for (size_t i = 0; i < det_stack.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(det_stack[i]);
  }
  s += ";det_head_k=" + std::to_string(det_head_k) + ";image_sigma=" + fmt_double(image_sigma) +
       ";leak=" + fmt_double(leak) + ";log_std=[" + fmt_double(log_std_min) + "," +
       fmt_double(log_std_max) + "];pose_scale=" + fmt_double(pose_scale);
  return s;
}

uint64_t ModelConfig::config_hash() const {
  uint64_t h = 1469598103934665603ull;
  for (const char c : canonical()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// LatentModel

namespace {

/// Walks the full tensor inventory of a model in registration order.
/// fan_in <= 0 marks a bias (zero-initialized).
template <typename S>
void for_each_tensor(const ModelConfig& cfg, const std::vector<nn::ConvGeom>& enc,
                     const std::vector<nn::ConvGeom>& det, const nn::ConvGeom& det_cls,
                     const nn::ConvGeom& det_reg,
                     const std::function<void(const std::string&, int, int, int)>& fn) {
  const int zd = cfg.z_dim();
  auto conv_layer = [&](const std::string& name, const nn::ConvGeom& g) {
    fn(name + ".w", g.out_ch, g.weight_cols(), g.weight_cols());
    fn(name + ".b", g.out_ch, 1, 0);
  };
  // A transposed conv unit on the large side sees roughly k^2 / stride^2
  // taps from each small-side channel.
  auto tconv_layer = [&](const std::string& name, const nn::ConvGeom& g) {
    const int fan = std::max(1, g.out_ch * g.k * g.k / (g.stride * g.stride));
    fn(name + ".w", g.out_ch, g.weight_cols(), fan);
    fn(name + ".b", g.in_ch, 1, 0);
  };
  auto mlp = [&](const std::string& prefix, int in_dim, int out_dim) {
    fn(prefix + ".fc0.w", cfg.hidden, in_dim, in_dim);
    fn(prefix + ".fc0.b", cfg.hidden, 1, 0);
    fn(prefix + ".fc1.w", cfg.hidden, cfg.hidden, cfg.hidden);
    fn(prefix + ".fc1.b", cfg.hidden, 1, 0);
    fn(prefix + ".head.w", 2 * out_dim, cfg.hidden, cfg.hidden);
    fn(prefix + ".head.b", 2 * out_dim, 1, 0);
  };
  auto image_decoder = [&](const std::string& prefix) {
    fn(prefix + ".fc.w", cfg.feature_dim, zd, zd);
    fn(prefix + ".fc.b", cfg.feature_dim, 1, 0);
    int li = 0;
    for (auto it = enc.rbegin(); it != enc.rend(); ++it, ++li) {
      tconv_layer(prefix + ".t" + std::to_string(li), *it);
    }
  };

  for (const char* e : {"enc_cam", "enc_lidar"}) {
    for (size_t i = 0; i < enc.size(); ++i) {
      const bool is_feat = (i + 1 == enc.size());
      conv_layer(std::string(e) + (is_feat ? ".feat" : ".c" + std::to_string(i)), enc[i]);
    }
  }
  mlp("q_init", 2 * cfg.feature_dim, zd);
  mlp("q_step", 2 * cfg.feature_dim + zd + cfg.action_dim, zd);
  mlp("p_step", zd + cfg.action_dim, zd);
  image_decoder("dec_cam");
  image_decoder("dec_lidar");
  image_decoder("dec_road");
  fn("dec_det.fc.w", cfg.feature_dim, zd, zd);
  fn("dec_det.fc.b", cfg.feature_dim, 1, 0);
  for (size_t i = 0; i < det.size(); ++i) {
    tconv_layer("dec_det.t" + std::to_string(i), det[i]);
  }
  tconv_layer("dec_det.cls", det_cls);
  tconv_layer("dec_det.reg", det_reg);
  mlp("dec_pose", zd, 4);
}

}  // namespace

template <typename S>
LatentModel<S>::LatentModel(const ModelConfig& config, nn::ParamStore<S>* store, uint64_t init_seed)
    : cfg_(config), store_(store) {
  cfg_.validate();
  int s = cfg_.image_size;
  int in_ch = cfg_.image_channels;
  for (const ConvStage& st : cfg_.conv_stack) {
    enc_geoms_.push_back({in_ch, st.ch, s, s, st.k, 2, st.k / 2});
    in_ch = st.ch;
    s = enc_geoms_.back().out_h();
  }
  enc_geoms_.push_back({in_ch, cfg_.feature_dim, s, s, cfg_.feature_k, 1, 0});

  det_geoms_.push_back(
      {cfg_.feature_dim, cfg_.feature_dim, cfg_.feature_k, cfg_.feature_k, cfg_.feature_k, 1, 0});
  int ds = cfg_.feature_k;
  int small_ch = cfg_.feature_dim;
  for (const int ch : cfg_.det_stack) {
    det_geoms_.push_back({ch, small_ch, ds * 2, ds * 2, 3, 2, 1});
    small_ch = ch;
    ds *= 2;
  }
  det_cls_geom_ = {1, small_ch, ds * 2, ds * 2, cfg_.det_head_k, 2, cfg_.det_head_k / 2};
  det_reg_geom_ = {6, small_ch, ds * 2, ds * 2, cfg_.det_head_k, 2, cfg_.det_head_k / 2};

  if (store_->size() == 0) {
    register_params(init_seed);
  } else {
    for_each_tensor<S>(cfg_, enc_geoms_, det_geoms_, det_cls_geom_, det_reg_geom_,
                       [&](const std::string& name, int rows, int cols, int) {
                         const auto& m = store_->at(name);
                         if (m.rows() != rows || m.cols() != cols) {
                           throw ContractError("LatentModel: tensor " + name + " is " +
                                               std::to_string(m.rows()) + "x" +
                                               std::to_string(m.cols()) + ", expected " +
                                               std::to_string(rows) + "x" + std::to_string(cols));
                         }
                       });
  }
}

template <typename S>
void LatentModel<S>::register_params(uint64_t seed) {
  for_each_tensor<S>(cfg_, enc_geoms_, det_geoms_, det_cls_geom_, det_reg_geom_,
                     [&](const std::string& name, int rows, int cols, int fan_in) {
                       MatX<S>& m = store_->create(name, rows, cols);
                       if (fan_in > 0) nn::he_init(&m, fan_in, cfg_.leak, seed, name);
                     });
}

template <typename S>
void LatentModel<S>::check_image(const Image<S>& img, const char* what) const {
  if (img.channels() != cfg_.image_channels || img.height != cfg_.image_size ||
      img.width != cfg_.image_size) {
    throw ContractError(std::string(what) + ": image is " + std::to_string(img.channels()) + "x" +
                        std::to_string(img.height) + "x" + std::to_string(img.width) +
                        ", model wants " + std::to_string(cfg_.image_channels) + "x" +
                        std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.image_size));
  }
}

template <typename S>
Gaussian<S> LatentModel<S>::gauss_from_nodes(const nn::Tape<S>& t, const GaussNodes& g) const {
  Gaussian<S> out;
  out.mean = t.value(g.mean).col(0);
  out.log_std = t.value(g.log_std).col(0);
  return out;
}

template <typename S>
VecX<S> LatentModel<S>::encode_frame(const Image<S>& camera, const Image<S>& lidar) const {
  check_image(camera, "encode_frame(camera)");
  check_image(lidar, "encode_frame(lidar)");
  nn::Tape<S> t;
  ModelGraph<S> g(*this, &t);
  const int f = g.encode(nn::leaf(t, camera.planes), nn::leaf(t, lidar.planes), 1);
  return t.value(f).col(0);
}

template <typename S>
Gaussian<S> LatentModel<S>::initial_posterior(const Image<S>& camera, const Image<S>& lidar) const {
  check_image(camera, "initial_posterior(camera)");
  check_image(lidar, "initial_posterior(lidar)");
  nn::Tape<S> t;
  ModelGraph<S> g(*this, &t);
  const int f = g.encode(nn::leaf(t, camera.planes), nn::leaf(t, lidar.planes), 1);
  return gauss_from_nodes(t, g.initial_posterior(f));
}

template <typename S>
Gaussian<S> LatentModel<S>::step_posterior(const VecX<S>& z, const Image<S>& camera,
                                           const Image<S>& lidar, const VecX<S>& action) const {
  check_image(camera, "step_posterior(camera)");
  check_image(lidar, "step_posterior(lidar)");
  if (z.size() != cfg_.z_dim() || action.size() != cfg_.action_dim) {
    throw ContractError("step_posterior: z dim " + std::to_string(z.size()) + ", action dim " +
                        std::to_string(action.size()));
  }
  if (!z.allFinite() || !action.allFinite()) {
    throw ContractError("step_posterior: non-finite input");
  }
  nn::Tape<S> t;
  ModelGraph<S> g(*this, &t);
  const int f = g.encode(nn::leaf(t, camera.planes), nn::leaf(t, lidar.planes), 1);
  const int zn = nn::leaf(t, MatX<S>(z));
  const int an = nn::leaf(t, MatX<S>(action));
  return gauss_from_nodes(t, g.step_posterior(zn, f, an));
}

template <typename S>
Gaussian<S> LatentModel<S>::initial_prior() const {
  Gaussian<S> g;
  g.mean = VecX<S>::Zero(cfg_.z_dim());
  g.log_std = VecX<S>::Zero(cfg_.z_dim());
  return g;
}

template <typename S>
Gaussian<S> LatentModel<S>::step_prior(const VecX<S>& z, const VecX<S>& action) const {
  if (z.size() != cfg_.z_dim() || action.size() != cfg_.action_dim) {
    throw ContractError("step_prior: z dim " + std::to_string(z.size()) + ", action dim " +
                        std::to_string(action.size()));
  }
  if (!z.allFinite() || !action.allFinite()) throw ContractError("step_prior: non-finite input");
  nn::Tape<S> t;
  ModelGraph<S> g(*this, &t);
  const int zn = nn::leaf(t, MatX<S>(z));
  const int an = nn::leaf(t, MatX<S>(action));
  return gauss_from_nodes(t, g.step_prior(zn, an));
}

template <typename S>
std::pair<Image<S>, Image<S>> LatentModel<S>::decode_sensors(const VecX<S>& z) const {
  if (z.size() != cfg_.z_dim()) throw ContractError("decode_sensors: z dim mismatch");
  nn::Tape<S> t;
  ModelGraph<S> g(*this, &t);
  const int zn = nn::leaf(t, MatX<S>(z));
  const int cam = g.decode_camera(zn, 1);
  const int lid = g.decode_lidar(zn, 1);
  Image<S> cam_img(cfg_.image_channels, cfg_.image_size, cfg_.image_size);
  Image<S> lid_img(cfg_.image_channels, cfg_.image_size, cfg_.image_size);
  cam_img.planes = t.value(cam);
  lid_img.planes = t.value(lid);
  return {std::move(cam_img), std::move(lid_img)};
}

template <typename S>
Image<S> LatentModel<S>::decode_roadmap(const VecX<S>& z) const {
  if (z.size() != cfg_.z_dim()) throw ContractError("decode_roadmap: z dim mismatch");
  nn::Tape<S> t;
  ModelGraph<S> g(*this, &t);
  const int rm = g.decode_roadmap(nn::leaf(t, MatX<S>(z)), 1);
  Image<S> img(cfg_.image_channels, cfg_.image_size, cfg_.image_size);
  img.planes = t.value(rm);
  return img;
}

template <typename S>
std::pair<MatX<S>, MatX<S>> LatentModel<S>::decode_detection(const VecX<S>& z) const {
  if (z.size() != cfg_.z_dim()) throw ContractError("decode_detection: z dim mismatch");
  nn::Tape<S> t;
  ModelGraph<S> g(*this, &t);
  const auto [cls, reg] = g.decode_detection(nn::leaf(t, MatX<S>(z)), 1);
  MatX<S> probs = (S(1) / (S(1) + (-t.value(cls).array()).exp())).matrix();
  return {std::move(probs), t.value(reg)};
}

template <typename S>
Gaussian<S> LatentModel<S>::decode_pose(const VecX<S>& z) const {
  if (z.size() != cfg_.z_dim()) throw ContractError("decode_pose: z dim mismatch");
  nn::Tape<S> t;
  ModelGraph<S> g(*this, &t);
  return gauss_from_nodes(t, g.decode_pose(nn::leaf(t, MatX<S>(z))));
}

// ---------------------------------------------------------------------------
// ModelGraph

template <typename S>
ModelGraph<S>::ModelGraph(const LatentModel<S>& model, nn::Tape<S>* tape)
    : model_(&model), tape_(tape) {
  const nn::ParamStore<S>& store = model.params();
  param_ids_.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i) {
    const auto& [name, value] = store.entry(i);
    const int id = nn::leaf(*tape_, value);
    param_ids_.emplace_back(name, id);
    param_index_[name] = id;
  }
}

template <typename S>
int ModelGraph<S>::param(const std::string& name) const {
  const auto it = param_index_.find(name);
  if (it == param_index_.end()) throw ContractError("ModelGraph: unknown parameter " + name);
  return it->second;
}

template <typename S>
int ModelGraph<S>::encode_stream(const std::string& prefix, int image, int batch) {
  const auto& geoms = model_->enc_geoms_;
  const S leak = S(model_->cfg_.leak);
  int cur = image;
  for (size_t i = 0; i < geoms.size(); ++i) {
    const bool is_feat = (i + 1 == geoms.size());
    const std::string name = prefix + (is_feat ? ".feat" : ".c" + std::to_string(i));
    cur = nn::conv2d(*tape_, cur, param(name + ".w"), param(name + ".b"), geoms[i], batch);
    cur = nn::leaky_relu(*tape_, cur, leak);
  }
  return cur;
}

template <typename S>
int ModelGraph<S>::encode(int camera, int lidar, int batch) {
  const int fc = encode_stream("enc_cam", camera, batch);
  const int fl = encode_stream("enc_lidar", lidar, batch);
  return nn::concat_rows(*tape_, fc, fl);
}

template <typename S>
GaussNodes ModelGraph<S>::gaussian_mlp(const std::string& prefix, int input, int out_dim) {
  const S leak = S(model_->cfg_.leak);
  int h = nn::fc(*tape_, param(prefix + ".fc0.w"), input, param(prefix + ".fc0.b"));
  h = nn::leaky_relu(*tape_, h, leak);
  h = nn::fc(*tape_, param(prefix + ".fc1.w"), h, param(prefix + ".fc1.b"));
  h = nn::leaky_relu(*tape_, h, leak);
  const int out = nn::fc(*tape_, param(prefix + ".head.w"), h, param(prefix + ".head.b"));
  GaussNodes g;
  g.mean = nn::slice_rows(*tape_, out, 0, out_dim);
  g.log_std = nn::clamp_op(*tape_, nn::slice_rows(*tape_, out, out_dim, out_dim),
                           S(model_->cfg_.log_std_min), S(model_->cfg_.log_std_max));
  return g;
}

template <typename S>
GaussNodes ModelGraph<S>::initial_posterior(int features) {
  return gaussian_mlp("q_init", features, model_->cfg_.z_dim());
}

template <typename S>
GaussNodes ModelGraph<S>::step_posterior(int z, int features, int action) {
  const int za = nn::concat_rows(*tape_, z, action);
  const int input = nn::concat_rows(*tape_, features, za);
  return gaussian_mlp("q_step", input, model_->cfg_.z_dim());
}

template <typename S>
GaussNodes ModelGraph<S>::step_prior(int z, int action) {
  const int input = nn::concat_rows(*tape_, z, action);
  return gaussian_mlp("p_step", input, model_->cfg_.z_dim());
}

template <typename S>
int ModelGraph<S>::sample(const GaussNodes& g, int noise) {
  const int std_node = nn::exp_op(*tape_, g.log_std);
  return nn::add(*tape_, g.mean, nn::mul_elem(*tape_, std_node, noise));
}

template <typename S>
int ModelGraph<S>::decode_image_stack(const std::string& prefix, int z, int batch) {
  const auto& geoms = model_->enc_geoms_;
  const S leak = S(model_->cfg_.leak);
  int cur = nn::fc(*tape_, param(prefix + ".fc.w"), z, param(prefix + ".fc.b"));
  cur = nn::leaky_relu(*tape_, cur, leak);
  int li = 0;
  for (int gi = static_cast<int>(geoms.size()) - 1; gi >= 0; --gi, ++li) {
    const std::string name = prefix + ".t" + std::to_string(li);
    cur = nn::tconv2d(*tape_, cur, param(name + ".w"), param(name + ".b"), geoms[gi], batch);
    // The layer emitting the image itself stays linear.
    if (gi != 0) cur = nn::leaky_relu(*tape_, cur, leak);
  }
  return cur;
}

template <typename S>
std::pair<int, int> ModelGraph<S>::decode_detection(int z, int batch) {
  const S leak = S(model_->cfg_.leak);
  int cur = nn::fc(*tape_, param("dec_det.fc.w"), z, param("dec_det.fc.b"));
  cur = nn::leaky_relu(*tape_, cur, leak);
  for (size_t i = 0; i < model_->det_geoms_.size(); ++i) {
    const std::string name = "dec_det.t" + std::to_string(i);
    cur = nn::tconv2d(*tape_, cur, param(name + ".w"), param(name + ".b"), model_->det_geoms_[i],
                      batch);
    cur = nn::leaky_relu(*tape_, cur, leak);
  }
  const int cls = nn::tconv2d(*tape_, cur, param("dec_det.cls.w"), param("dec_det.cls.b"),
                              model_->det_cls_geom_, batch);
  const int reg = nn::tconv2d(*tape_, cur, param("dec_det.reg.w"), param("dec_det.reg.b"),
                              model_->det_reg_geom_, batch);
  return {cls, reg};
}

template <typename S>
GaussNodes ModelGraph<S>::decode_pose(int z) {
  return gaussian_mlp("dec_pose", z, 4);
}

template <typename S>
void ModelGraph<S>::accumulate_param_grads(nn::ParamStore<S>* grads) const {
  for (const auto& [name, id] : param_ids_) {
    if (!tape_->grad_touched(id)) continue;
    if (!grads->has(name)) {
      const auto& v = tape_->value(id);
      grads->create(name, v.rows(), v.cols());
    }
    grads->at(name) += tape_->grad(id);
  }
}

template class ModelGraph<float>;
template class ModelGraph<double>;
template class LatentModel<float>;
template class LatentModel<double>;

}  // namespace latperc
