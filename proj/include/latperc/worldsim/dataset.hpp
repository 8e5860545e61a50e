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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latperc/worldsim/episode.hpp"

namespace latperc {

/// Episode in storage form: images as u8 (exactly what goes on disk),
/// everything else f32. Training keeps datasets in this form because the
/// float frames are an order of magnitude larger.
struct StoredEpisode {
  int frame_count = 0;
  int image_size = 0;
  std::vector<uint8_t> camera;    // [T][3][S*S]
  std::vector<uint8_t> lidar;     // [T][3][S*S]
  std::vector<uint8_t> roadmap;   // [T][3][S*S]
  std::vector<float> poses;       // [T][3] (x, y, yaw)
  std::vector<float> actions;     // [T-1][2] (steer, accel)
  std::vector<int> box_offsets;   // T+1 prefix counts into box_payload
  std::vector<float> box_payload; // [total][5] (cx, cy, heading, length, width)
  uint64_t seed = 0;
  uint64_t world_ref = 0;

  bool operator==(const StoredEpisode&) const = default;
};

StoredEpisode store_episode(const Episode& episode);
Episode unpack_episode(const StoredEpisode& stored);

/// Decode one frame's images into float planes (values n/255).
ImageF decode_image(const std::vector<uint8_t>& data, int image_size, int frame);
/// Ground-truth boxes of one stored frame, scores restored to 1.
std::vector<OrientedBox> stored_boxes(const StoredEpisode& episode, int frame);

/// Storage-precision equality: true when both episodes produce identical
/// bytes on disk.
bool deep_equal(const Episode& a, const Episode& b);

/// On-disk dataset: `dataset.json` at the root plus one directory per
/// episode holding `manifest.json` and one little-endian raw file per
/// array. All failures throw FormatError naming the offending file.
void write_dataset(const std::vector<Episode>& episodes, const std::filesystem::path& root);
std::vector<Episode> read_dataset(const std::filesystem::path& root);

/// Same layout, storage form; what training and evaluation load.
void write_dataset_stored(const std::vector<StoredEpisode>& episodes,
                          const std::filesystem::path& root);
std::vector<StoredEpisode> read_dataset_stored(const std::filesystem::path& root);

/// Single-episode pieces, used by the CLI to write incrementally.
void write_episode_dir(const StoredEpisode& episode, const std::filesystem::path& dir);
StoredEpisode read_episode_dir(const std::filesystem::path& dir);
void write_dataset_root_manifest(int episode_count, const std::filesystem::path& root);
std::filesystem::path episode_dir_name(const std::filesystem::path& root, int index);

}  // namespace latperc
