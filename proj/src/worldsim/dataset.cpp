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

#include "latperc/worldsim/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "dataset files are little-endian; big-endian hosts are not supported");

namespace latperc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint8_t to_u8(float v) {
  const long n = std::lround(static_cast<double>(v) * 255.0);
  return static_cast<uint8_t>(std::clamp(n, 0L, 255L));
}

void append_image_u8(const ImageF& img, std::vector<uint8_t>* out) {
  for (Eigen::Index c = 0; c < img.planes.rows(); ++c) {
    for (Eigen::Index p = 0; p < img.planes.cols(); ++p) out->push_back(to_u8(img.planes(c, p)));
  }
}

void write_file(const fs::path& path, const void* data, size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw FormatError("short write: " + path.string());
}

std::vector<char> read_file_exact(const fs::path& path, size_t expected_bytes) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("missing array file: " + path.string());
  const auto size = static_cast<size_t>(in.tellg());
  if (size != expected_bytes) {
    char msg[512];
    std::snprintf(msg, sizeof msg, "array file %s holds %zu bytes, manifest expects %zu",
                  path.string().c_str(), size, expected_bytes);
    throw FormatError(msg);
  }
  std::vector<char> data(size);
  in.seekg(0);
  in.read(data.data(), static_cast<std::streamsize>(size));
  if (!in) throw FormatError("short read: " + path.string());
  return data;
}

json array_descriptor(const std::string& name, const std::string& dtype,
                      const std::vector<int64_t>& shape, const std::string& filename) {
  json d;
  d["name"] = name;
  d["dtype"] = dtype;
  d["shape"] = shape;
  d["filename"] = filename;
  d["byte_order"] = "little-endian";
  return d;
}

int64_t shape_elements(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t s : shape) n *= s;
  return n;
}

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing manifest: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt manifest " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace

StoredEpisode store_episode(const Episode& episode) {
  StoredEpisode s;
  s.frame_count = static_cast<int>(episode.frames.size());
  s.image_size = s.frame_count > 0 ? episode.frames.front().camera.height : 0;
  s.seed = episode.seed;
  s.world_ref = episode.world_ref;
  s.box_offsets.push_back(0);
  for (const ObservationFrame& f : episode.frames) {
    if (f.camera.height != s.image_size || f.camera.width != s.image_size ||
        f.lidar_bev.height != s.image_size || f.roadmap.height != s.image_size) {
      throw ContractError("store_episode: frames disagree on image size");
    }
    append_image_u8(f.camera, &s.camera);
    append_image_u8(f.lidar_bev, &s.lidar);
    append_image_u8(f.roadmap, &s.roadmap);
    s.poses.push_back(static_cast<float>(f.ego_pose.x));
    s.poses.push_back(static_cast<float>(f.ego_pose.y));
    s.poses.push_back(static_cast<float>(f.ego_pose.yaw));
    for (const OrientedBox& b : f.gt_boxes) {
      s.box_payload.push_back(static_cast<float>(b.cx));
      s.box_payload.push_back(static_cast<float>(b.cy));
      s.box_payload.push_back(static_cast<float>(b.heading));
      s.box_payload.push_back(static_cast<float>(b.length));
      s.box_payload.push_back(static_cast<float>(b.width));
    }
    s.box_offsets.push_back(static_cast<int>(s.box_payload.size() / 5));
  }
  for (const EgoAction& a : episode.actions) {
    s.actions.push_back(static_cast<float>(a.steer));
    s.actions.push_back(static_cast<float>(a.accel));
  }
  return s;
}

ImageF decode_image(const std::vector<uint8_t>& data, int image_size, int frame) {
  ImageF img(3, image_size, image_size);
  const size_t pixels = static_cast<size_t>(image_size) * image_size;
  const size_t base = static_cast<size_t>(frame) * 3 * pixels;
  for (size_t c = 0; c < 3; ++c) {
    for (size_t p = 0; p < pixels; ++p) {
      img.planes(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(p)) =
          static_cast<float>(data[base + c * pixels + p] / 255.0);
    }
  }
  return img;
}

std::vector<OrientedBox> stored_boxes(const StoredEpisode& episode, int frame) {
  std::vector<OrientedBox> boxes;
  for (int i = episode.box_offsets[static_cast<size_t>(frame)];
       i < episode.box_offsets[static_cast<size_t>(frame) + 1]; ++i) {
    const float* p = &episode.box_payload[static_cast<size_t>(i) * 5];
    boxes.push_back(OrientedBox{p[0], p[1], p[2], p[3], p[4], 1.0});
  }
  return boxes;
}

Episode unpack_episode(const StoredEpisode& s) {
  Episode episode;
  episode.seed = s.seed;
  episode.world_ref = s.world_ref;
  for (int t = 0; t < s.frame_count; ++t) {
    ObservationFrame f;
    f.camera = decode_image(s.camera, s.image_size, t);
    f.lidar_bev = decode_image(s.lidar, s.image_size, t);
    f.roadmap = decode_image(s.roadmap, s.image_size, t);
    f.ego_pose = {s.poses[static_cast<size_t>(t) * 3], s.poses[static_cast<size_t>(t) * 3 + 1],
                  s.poses[static_cast<size_t>(t) * 3 + 2]};
    f.gt_boxes = stored_boxes(s, t);
    episode.frames.push_back(std::move(f));
  }
  for (size_t i = 0; i + 1 < s.actions.size(); i += 2) {
    episode.actions.push_back(EgoAction{s.actions[i], s.actions[i + 1]});
  }
  return episode;
}

bool deep_equal(const Episode& a, const Episode& b) {
  return store_episode(a) == store_episode(b);
}

std::filesystem::path episode_dir_name(const fs::path& root, int index) {
  char name[32];
  std::snprintf(name, sizeof name, "episode_%05d", index);
  return root / name;
}

void write_episode_dir(const StoredEpisode& episode, const fs::path& dir) {
  fs::create_directories(dir);
  const int t = episode.frame_count;
  const int s = episode.image_size;
  const int nb = episode.box_offsets.empty() ? 0 : episode.box_offsets.back();

  // Offsets travel as f32; counts are small integers, exact in f32.
  std::vector<float> offsets_f(episode.box_offsets.begin(), episode.box_offsets.end());

  json manifest;
  manifest["seed"] = episode.seed;
  manifest["world_ref"] = episode.world_ref;
  manifest["frame_count"] = t;
  manifest["image_size"] = s;
  manifest["arrays"] = json::array({
      array_descriptor("camera", "u8", {t, 3, s, s}, "camera.bin"),
      array_descriptor("lidar", "u8", {t, 3, s, s}, "lidar.bin"),
      array_descriptor("roadmap", "u8", {t, 3, s, s}, "roadmap.bin"),
      array_descriptor("poses", "f32", {t, 3}, "poses.bin"),
      array_descriptor("actions", "f32", {t > 0 ? t - 1 : 0, 2}, "actions.bin"),
      array_descriptor("box_index", "f32", {t + 1}, "box_index.bin"),
      array_descriptor("box_payload", "f32", {nb, 5}, "box_payload.bin"),
  });
  const std::string text = manifest.dump(2) + "\n";
  write_file(dir / "manifest.json", text.data(), text.size());

  write_file(dir / "camera.bin", episode.camera.data(), episode.camera.size());
  write_file(dir / "lidar.bin", episode.lidar.data(), episode.lidar.size());
  write_file(dir / "roadmap.bin", episode.roadmap.data(), episode.roadmap.size());
  write_file(dir / "poses.bin", episode.poses.data(), episode.poses.size() * 4);
  write_file(dir / "actions.bin", episode.actions.data(), episode.actions.size() * 4);
  write_file(dir / "box_index.bin", offsets_f.data(), offsets_f.size() * 4);
  write_file(dir / "box_payload.bin", episode.box_payload.data(), episode.box_payload.size() * 4);
}

StoredEpisode read_episode_dir(const fs::path& dir) {
  const json manifest = load_json(dir / "manifest.json");
  StoredEpisode episode;
  try {
    episode.seed = manifest.at("seed").get<uint64_t>();
    episode.world_ref = manifest.at("world_ref").get<uint64_t>();
    episode.frame_count = manifest.at("frame_count").get<int>();
    episode.image_size = manifest.at("image_size").get<int>();
  } catch (const json::exception& e) {
    throw FormatError("corrupt manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }

  std::vector<float> offsets_f;
  for (const json& d : manifest.at("arrays")) {
    std::string name, dtype, filename, byte_order;
    std::vector<int64_t> shape;
    try {
      name = d.at("name").get<std::string>();
      dtype = d.at("dtype").get<std::string>();
      filename = d.at("filename").get<std::string>();
      byte_order = d.at("byte_order").get<std::string>();
      shape = d.at("shape").get<std::vector<int64_t>>();
    } catch (const json::exception& e) {
      throw FormatError("corrupt manifest " + (dir / "manifest.json").string() + ": " + e.what());
    }
    if (byte_order != "little-endian") {
      throw FormatError("unsupported byte order '" + byte_order + "' in " + dir.string());
    }
    if (dtype != "u8" && dtype != "f32") {
      throw FormatError("unsupported dtype '" + dtype + "' in " + dir.string());
    }
    const int64_t elements = shape_elements(shape);
    const size_t bytes = static_cast<size_t>(elements) * (dtype == "u8" ? 1 : 4);
    const std::vector<char> raw = read_file_exact(dir / filename, bytes);

    auto as_u8 = [&](std::vector<uint8_t>* out) {
      out->assign(raw.begin(), raw.end());
    };
    auto as_f32 = [&](std::vector<float>* out) {
      out->resize(static_cast<size_t>(elements));
      std::memcpy(out->data(), raw.data(), raw.size());
    };
    if (name == "camera") as_u8(&episode.camera);
    else if (name == "lidar") as_u8(&episode.lidar);
    else if (name == "roadmap") as_u8(&episode.roadmap);
    else if (name == "poses") as_f32(&episode.poses);
    else if (name == "actions") as_f32(&episode.actions);
    else if (name == "box_index") as_f32(&offsets_f);
    else if (name == "box_payload") as_f32(&episode.box_payload);
    else throw FormatError("unknown array '" + name + "' in " + dir.string());
  }

  const size_t t = static_cast<size_t>(episode.frame_count);
  const size_t plane = static_cast<size_t>(episode.image_size) * episode.image_size * 3;
  if (episode.camera.size() != t * plane || episode.lidar.size() != t * plane ||
      episode.roadmap.size() != t * plane || episode.poses.size() != t * 3 ||
      (t > 0 && episode.actions.size() != (t - 1) * 2) || offsets_f.size() != t + 1) {
    throw FormatError("array shapes disagree with frame_count in " + dir.string());
  }
  episode.box_offsets.assign(offsets_f.begin(), offsets_f.end());
  for (size_t i = 0; i + 1 < episode.box_offsets.size(); ++i) {
    if (episode.box_offsets[i] > episode.box_offsets[i + 1]) {
      throw FormatError("box index is not monotone in " + dir.string());
    }
  }
  if (!episode.box_offsets.empty() &&
      episode.box_payload.size() != static_cast<size_t>(episode.box_offsets.back()) * 5) {
    throw FormatError("box payload size disagrees with box index in " + dir.string());
  }
  return episode;
}

void write_dataset_root_manifest(int episode_count, const fs::path& root) {
  fs::create_directories(root);
  json j;
  j["format"] = "latperc-dataset-v1";
  j["episodes"] = episode_count;
  const std::string text = j.dump(2) + "\n";
  write_file(root / "dataset.json", text.data(), text.size());
}

void write_dataset_stored(const std::vector<StoredEpisode>& episodes, const fs::path& root) {
  write_dataset_root_manifest(static_cast<int>(episodes.size()), root);
  for (size_t i = 0; i < episodes.size(); ++i) {
    write_episode_dir(episodes[i], episode_dir_name(root, static_cast<int>(i)));
  }
}

std::vector<StoredEpisode> read_dataset_stored(const fs::path& root) {
  const json j = load_json(root / "dataset.json");
  int count = 0;
  try {
    if (j.at("format").get<std::string>() != "latperc-dataset-v1") {
      throw FormatError("unknown dataset format in " + (root / "dataset.json").string());
    }
    count = j.at("episodes").get<int>();
  } catch (const json::exception& e) {
    throw FormatError("corrupt manifest " + (root / "dataset.json").string() + ": " + e.what());
  }
  std::vector<StoredEpisode> episodes;
  episodes.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) episodes.push_back(read_episode_dir(episode_dir_name(root, i)));
  return episodes;
}

void write_dataset(const std::vector<Episode>& episodes, const fs::path& root) {
  std::vector<StoredEpisode> stored;
  stored.reserve(episodes.size());
  for (const Episode& e : episodes) stored.push_back(store_episode(e));
  write_dataset_stored(stored, root);
}

std::vector<Episode> read_dataset(const fs::path& root) {
  std::vector<Episode> episodes;
  for (const StoredEpisode& s : read_dataset_stored(root)) episodes.push_back(unpack_episode(s));
  return episodes;
}

}  // namespace latperc
