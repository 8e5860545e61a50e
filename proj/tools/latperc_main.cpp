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

#include <atomic>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "latperc/evaluation/evaluation.hpp"
#include "latperc/model/model.hpp"
#include "latperc/rng.hpp"
#include "latperc/training/training.hpp"
#include "latperc/worldsim/dataset.hpp"
#include "latperc/worldsim/episode.hpp"
#include "latperc/worldsim/map.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace latperc;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string hash_hex(const std::string& text) {
  uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out.good()) throw RuntimeAbort("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

/// Writes the run manifest in "running" state on construction and
/// finalizes it exactly once: "complete" with the recorded outputs, or
/// "failed" from the destructor when the run never got that far.
class ManifestGuard {
 public:
  ManifestGuard(const fs::path& out_dir, const std::string& command, const json& config,
                uint64_t seed)
      : path_(out_dir / "run_manifest.json") {
    fs::create_directories(out_dir);
    body_["command"] = command;
    body_["config"] = config;
    body_["config_hash"] = hash_hex(config.dump());
    body_["seed"] = seed;
    body_["version"] = kVersion;
    body_["started"] = timestamp_utc();
    body_["status"] = "running";
    write_file_atomic(path_, body_.dump(2) + "\n");
  }

  void complete(const std::vector<std::string>& outputs) {
    body_["outputs"] = outputs;
    finalize("complete");
  }

  ~ManifestGuard() {
    if (!done_) {
      try {
        finalize("failed");
      } catch (...) {
        // A failing manifest rewrite must not mask the original error.
      }
    }
  }

 private:
  void finalize(const std::string& status) {
    body_["status"] = status;
    body_["finished"] = timestamp_utc();
    write_file_atomic(path_, body_.dump(2) + "\n");
    done_ = true;
  }

  fs::path path_;
  json body_;
  bool done_ = false;
};

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// Pulls `key` out of `j` into `field` if present, with a type check.
template <typename T>
void take(json& j, const char* key, T* field) {
  if (!j.contains(key)) return;
  try {
    *field = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key \"") + key + "\" has the wrong type");
  }
  j.erase(key);
}

void reject_leftovers(const json& j, const std::string& what) {
  if (j.empty()) return;
  std::ostringstream msg;
  msg << what << " config has unknown keys:";
  for (const auto& [k, v] : j.items()) msg << " " << k;
  throw ConfigError(msg.str());
}

WorldConfig world_config_from_json(json j) {
  WorldConfig c;
  take(j, "bounds_m", &c.bounds_m);
  take(j, "grid_pitch_m", &c.grid_pitch_m);
  take(j, "lane_width_m", &c.lane_width_m);
  take(j, "buildings_per_block", &c.buildings_per_block);
  take(j, "building_margin_m", &c.building_margin_m);
  take(j, "image_size", &c.image_size);
  take(j, "bev_res_m", &c.bev_res_m);
  take(j, "lidar_beams", &c.lidar_beams);
  take(j, "camera_fov_deg", &c.camera_fov_deg);
  take(j, "camera_height_m", &c.camera_height_m);
  take(j, "camera_view_dist_m", &c.camera_view_dist_m);
  take(j, "dt", &c.dt);
  take(j, "v_max", &c.v_max);
  take(j, "max_accel", &c.max_accel);
  take(j, "max_steer_rad", &c.max_steer_rad);
  take(j, "wheelbase_m", &c.wheelbase_m);
  take(j, "num_traffic", &c.num_traffic);
  take(j, "ego_cruise_speed", &c.ego_cruise_speed);
  take(j, "traffic_speed_min", &c.traffic_speed_min);
  take(j, "traffic_speed_max", &c.traffic_speed_max);
  take(j, "vehicle_length_min", &c.vehicle_length_min);
  take(j, "vehicle_length_max", &c.vehicle_length_max);
  take(j, "vehicle_width_min", &c.vehicle_width_min);
  take(j, "vehicle_width_max", &c.vehicle_width_max);
  take(j, "ego_length", &c.ego_length);
  take(j, "ego_width", &c.ego_width);
  take(j, "follow_stop_gap", &c.follow_stop_gap);
  take(j, "follow_slow_gap", &c.follow_slow_gap);
  reject_leftovers(j, "world");
  return c;
}

json world_config_to_json(const WorldConfig& c) {
  json j;
  j["bounds_m"] = c.bounds_m;
  j["grid_pitch_m"] = c.grid_pitch_m;
  j["lane_width_m"] = c.lane_width_m;
  j["buildings_per_block"] = c.buildings_per_block;
  j["building_margin_m"] = c.building_margin_m;
  j["image_size"] = c.image_size;
  j["bev_res_m"] = c.bev_res_m;
  j["lidar_beams"] = c.lidar_beams;
  j["camera_fov_deg"] = c.camera_fov_deg;
  j["camera_height_m"] = c.camera_height_m;
  j["camera_view_dist_m"] = c.camera_view_dist_m;
  j["dt"] = c.dt;
  j["v_max"] = c.v_max;
  j["max_accel"] = c.max_accel;
  j["max_steer_rad"] = c.max_steer_rad;
  j["wheelbase_m"] = c.wheelbase_m;
  j["num_traffic"] = c.num_traffic;
  j["ego_cruise_speed"] = c.ego_cruise_speed;
  j["traffic_speed_min"] = c.traffic_speed_min;
  j["traffic_speed_max"] = c.traffic_speed_max;
  j["vehicle_length_min"] = c.vehicle_length_min;
  j["vehicle_length_max"] = c.vehicle_length_max;
  j["vehicle_width_min"] = c.vehicle_width_min;
  j["vehicle_width_max"] = c.vehicle_width_max;
  j["ego_length"] = c.ego_length;
  j["ego_width"] = c.ego_width;
  j["follow_stop_gap"] = c.follow_stop_gap;
  j["follow_slow_gap"] = c.follow_slow_gap;
  return j;
}

TrainConfig train_config_from_json(json j) {
  TrainConfig c;
  take(j, "batch_size", &c.batch_size);
  take(j, "learning_rate", &c.learning_rate);
  take(j, "sequence_length", &c.sequence_length);
  take(j, "total_iterations", &c.total_iterations);
  std::string variant = to_string(c.variant);
  take(j, "variant", &variant);
  c.variant = variant_from_string(variant);
  take(j, "seed", &c.seed);
  take(j, "grid_res_m", &c.grid_res_m);
  take(j, "grad_clip_norm", &c.grad_clip_norm);
  take(j, "checkpoint_every", &c.checkpoint_every);
  take(j, "adam_beta1", &c.adam_beta1);
  take(j, "adam_beta2", &c.adam_beta2);
  take(j, "adam_eps", &c.adam_eps);
  reject_leftovers(j, "train");
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  json j;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["sequence_length"] = c.sequence_length;
  j["total_iterations"] = c.total_iterations;
  j["variant"] = to_string(c.variant);
  j["seed"] = c.seed;
  j["grid_res_m"] = c.grid_res_m;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["checkpoint_every"] = c.checkpoint_every;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  return j;
}

/// Reads the world sidecar written by gen-data, for the map extent the
/// pose head normalizes against. Externally assembled datasets may lack
/// it; the default world extent applies then.
double dataset_bounds_m(const fs::path& data_dir) {
  const fs::path sidecar = data_dir / "world.json";
  if (!fs::exists(sidecar)) return WorldConfig{}.bounds_m;
  return world_config_from_json(load_json_file(sidecar)).bounds_m;
}

/// Rebuilds the model a checkpoint was trained with and loads its
/// parameters into `store` (optimizer moments are read and discarded).
LatentModelF model_from_checkpoint(const fs::path& path, nn::ParamStore<float>* store,
                                   std::string* variant_label) {
  const auto extra = nn::peek_checkpoint_extra(path.string());
  for (const char* key : {"image_size", "pose_scale_milli", "variant"}) {
    if (!extra.count(key)) {
      throw FormatError("checkpoint " + path.string() + " lacks the " + key + " setting");
    }
  }
  const int image_size = static_cast<int>(extra.at("image_size"));
  const double bounds_m = 2.0 * static_cast<double>(extra.at("pose_scale_milli")) / 1000.0;
  *variant_label = to_string(static_cast<Variant>(extra.at("variant")));

  const ModelConfig cfg = ModelConfig::standard(image_size, bounds_m);
  LatentModelF model(cfg, store, 0);
  nn::ParamStore<float> moments_m, moments_v;
  for (size_t i = 0; i < store->size(); ++i) {
    const auto& [name, value] = store->entry(i);
    moments_m.create(name, value.rows(), value.cols());
    moments_v.create(name, value.rows(), value.cols());
  }
  nn::load_checkpoint(path.string(),
                      {{"", store}, {"adam.m.", &moments_m}, {"adam.v.", &moments_v}},
                      cfg.config_hash());
  return model;
}

struct GenDataArgs {
  std::string config, out;
  int episodes = 0, length = 0, workers = 1;
  uint64_t seed = 0;
};

int run_gen_data(const GenDataArgs& args) {
  WorldConfig wc =
      args.config.empty() ? WorldConfig{} : world_config_from_json(load_json_file(args.config));
  wc.validate();
  if (args.episodes < 1 || args.length < 1) {
    throw ConfigError("gen-data: --episodes and --length must be at least 1");
  }

  const fs::path out(args.out);
  ManifestGuard manifest(out, "gen-data", world_config_to_json(wc), args.seed);

  const WorldMap world = build_world(args.seed, wc);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const auto worker = [&]() {
    for (int e; (e = next.fetch_add(1)) < args.episodes && !failed.load();) {
      try {
        Rng stream = Rng(args.seed).child(static_cast<uint64_t>(e));
        const Episode episode = generate_episode(world, stream.next_u64(), args.length, wc);
        write_episode_dir(store_episode(episode), episode_dir_name(out, e));
      } catch (...) {
        const std::scoped_lock lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  const int workers = std::max(1, std::min(args.workers, args.episodes));
  if (workers == 1) {
    worker();
  } else {
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  write_dataset_root_manifest(args.episodes, out);
  write_file_atomic(out / "world.json", world_config_to_json(wc).dump(2) + "\n");

  std::vector<std::string> outputs = {"dataset.json", "world.json"};
  for (int e = 0; e < args.episodes; ++e) {
    outputs.push_back(episode_dir_name(out, e).filename().string());
  }
  manifest.complete(outputs);
  std::printf("wrote %d episodes of %d frames to %s\n", args.episodes, args.length,
              out.string().c_str());
  return 0;
}

struct TrainArgs {
  std::string config, data, out, variant;
  int64_t seed = -1;
  int workers = 1;
};

int run_train(const TrainArgs& args) {
  TrainConfig tc =
      args.config.empty() ? TrainConfig{} : train_config_from_json(load_json_file(args.config));
  if (!args.variant.empty()) tc.variant = variant_from_string(args.variant);
  if (args.seed >= 0) tc.seed = static_cast<uint64_t>(args.seed);
  tc.validate();

  const fs::path out(args.out);
  ManifestGuard manifest(out, "train", train_config_to_json(tc), tc.seed);

  const std::vector<StoredEpisode> data = read_dataset_stored(args.data);
  if (data.empty()) throw ConfigError("train: dataset " + args.data + " has no episodes");
  const ModelConfig model_cfg =
      ModelConfig::standard(data[0].image_size, dataset_bounds_m(args.data));
  const TrainResult result = train(tc, model_cfg, data, out);

  manifest.complete({"train_log.csv", result.final_checkpoint.filename().string()});
  std::printf("trained %d iterations, objective %.6g, checkpoint %s\n",
              result.iterations_completed, result.last_report.total,
              result.final_checkpoint.string().c_str());
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, out;
  std::string mode = "mean";
  uint64_t seed = 0;
  int dump_frames = 0;
  int workers = 1;
  double grid_res = 0.5;
  double min_score = 0.01;
};

int run_eval(const EvalArgs& args) {
  EvalConfig cfg;
  cfg.rollout.mode = rollout_mode_from_string(args.mode);
  cfg.rollout.seed = args.seed;
  cfg.rollout.grid_res_m = args.grid_res;
  cfg.rollout.score_threshold = args.min_score;
  cfg.workers = args.workers;

  json manifest_cfg;
  manifest_cfg["checkpoint"] = args.checkpoint;
  manifest_cfg["mode"] = args.mode;
  manifest_cfg["grid_res_m"] = args.grid_res;
  manifest_cfg["min_score"] = args.min_score;
  const fs::path out(args.out);
  ManifestGuard manifest(out, "eval", manifest_cfg, args.seed);

  nn::ParamStore<float> store;
  const LatentModelF model = model_from_checkpoint(args.checkpoint, &store, &cfg.variant_label);
  const std::vector<Episode> episodes = read_dataset(args.data);
  const EvalReport report = evaluate(model, episodes, cfg);
  write_eval_outputs(report, out);

  std::vector<std::string> outputs = {"report.json"};
  for (const auto& [iou, curve] : report.curves) {
    char name[48];
    std::snprintf(name, sizeof(name), "pr_curve_iou%g.csv", iou);
    outputs.emplace_back(name);
  }

  if (args.dump_frames > 0) {
    RolloutConfig dump_cfg = cfg.rollout;
    dump_cfg.decode_sensor_images = true;
    const auto steps = filter_rollout(model, episodes.front(), dump_cfg);
    fs::create_directories(out / "frames");
    const int n = std::min<int>(args.dump_frames, static_cast<int>(steps.size()));
    for (int tau = 0; tau < n; ++tau) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%03d.ppm", tau);
      write_ppm(compose_side_by_side(episodes.front().frames[tau], steps[tau]),
                out / "frames" / name);
      outputs.push_back(std::string("frames/") + name);
    }
  }

  manifest.complete(outputs);
  std::printf("evaluated %zu episodes (%s): AP@0.1 %.4f AP@0.5 %.4f, location %.2f m, "
              "heading %.4f rad\n",
              episodes.size(), cfg.variant_label.c_str(), report.ap.at(0.1), report.ap.at(0.5),
              report.pose.location_m, report.pose.heading_rad);
  return 0;
}

struct InferArgs {
  std::string checkpoint, input, out;
  std::string mode = "mean";
  uint64_t seed = 0;
};

int run_infer(const InferArgs& args) {
  RolloutConfig cfg;
  cfg.mode = rollout_mode_from_string(args.mode);
  cfg.seed = args.seed;
  cfg.decode_sensor_images = true;

  json manifest_cfg;
  manifest_cfg["checkpoint"] = args.checkpoint;
  manifest_cfg["input"] = args.input;
  manifest_cfg["mode"] = args.mode;
  const fs::path out(args.out);
  ManifestGuard manifest(out, "infer", manifest_cfg, args.seed);

  nn::ParamStore<float> store;
  std::string variant_label;
  const LatentModelF model = model_from_checkpoint(args.checkpoint, &store, &variant_label);
  const Episode episode = unpack_episode(read_episode_dir(args.input));
  const auto steps = filter_rollout(model, episode, cfg);

  json rollout = json::array();
  std::vector<std::string> outputs = {"rollout.json"};
  fs::create_directories(out / "frames");
  for (size_t tau = 0; tau < steps.size(); ++tau) {
    const RolloutStep& step = steps[tau];
    json entry;
    entry["step"] = tau;
    entry["pose"] = {{"x", step.pose.x}, {"y", step.pose.y}, {"yaw", step.pose.yaw}};
    json boxes = json::array();
    for (const OrientedBox& b : step.boxes) {
      boxes.push_back({{"cx", b.cx},
                       {"cy", b.cy},
                       {"heading", b.heading},
                       {"length", b.length},
                       {"width", b.width},
                       {"score", b.score}});
    }
    entry["boxes"] = boxes;
    rollout.push_back(entry);

    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03d.ppm", static_cast<int>(tau));
    write_ppm(compose_side_by_side(episode.frames[tau], step), out / "frames" / name);
    outputs.push_back(std::string("frames/") + name);
  }
  write_file_atomic(out / "rollout.json", rollout.dump(2) + "\n");

  manifest.complete(outputs);
  std::printf("decoded %zu frames to %s\n", steps.size(), out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latperc: sequential latent perception on a synthetic driving world"};
  app.set_version_flag("--version", std::string("latperc ") + kVersion);
  app.require_subcommand(1);
  app.failure_message([](const CLI::App* a, const CLI::Error& e) {
    return std::string(e.what()) + "\n\n" + a->help();
  });

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a dataset of driving episodes");
  gen->add_option("--config", gen_args.config, "World config JSON file");
  gen->add_option("--episodes", gen_args.episodes, "Number of episodes")->required();
  gen->add_option("--length", gen_args.length, "Frames per episode")->required();
  gen->add_option("--seed", gen_args.seed, "Generation seed");
  gen->add_option("--out", gen_args.out, "Output dataset directory")->required();
  gen->add_option("--workers", gen_args.workers, "Parallel episode writers");

  TrainArgs train_args;
  CLI::App* tr = app.add_subcommand("train", "Train a model on a dataset");
  tr->add_option("--config", train_args.config, "Train config JSON file");
  tr->add_option("--data", train_args.data, "Dataset directory")->required();
  tr->add_option("--out", train_args.out, "Run output directory")->required();
  tr->add_option("--variant", train_args.variant, "full | no-input | no-roadmap");
  tr->add_option("--seed", train_args.seed, "Training seed (overrides config)");
  tr->add_option("--workers", train_args.workers, "Accepted for symmetry; training is serial");

  EvalArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on held-out episodes");
  ev->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", eval_args.data, "Dataset directory")->required();
  ev->add_option("--out", eval_args.out, "Report output directory")->required();
  ev->add_option("--mode", eval_args.mode, "mean | sample");
  ev->add_option("--seed", eval_args.seed, "Noise seed for sample mode");
  ev->add_option("--dump-frames", eval_args.dump_frames,
                 "Render this many side-by-side frames of the first episode");
  ev->add_option("--workers", eval_args.workers, "Parallel episode rollouts");
  ev->add_option("--grid-res", eval_args.grid_res, "Detection grid resolution, m/cell");
  ev->add_option("--min-score", eval_args.min_score, "Detection score floor");

  InferArgs infer_args;
  CLI::App* in = app.add_subcommand("infer", "Run filtering inference over one episode");
  in->add_option("--checkpoint", infer_args.checkpoint, "Checkpoint file")->required();
  in->add_option("--input", infer_args.input, "Episode directory")->required();
  in->add_option("--out", infer_args.out, "Output directory")->required();
  in->add_option("--mode", infer_args.mode, "mean | sample");
  in->add_option("--seed", infer_args.seed, "Noise seed for sample mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen_data(gen_args);
    if (tr->parsed()) return run_train(train_args);
    if (ev->parsed()) return run_eval(eval_args);
    if (in->parsed()) return run_infer(infer_args);
    std::cerr << app.help();
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 1;
  } catch (const RuntimeAbort& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
