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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "latperc/worldsim/dataset.hpp"
#include "latperc/worldsim/episode.hpp"
#include "latperc/worldsim/map.hpp"

using namespace latperc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("latperc_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<Episode> tiny_dataset() {
  WorldConfig config;
  config.num_traffic = 5;
  const WorldMap map = build_world(4, config);
  return {generate_episode(map, 1, 6, config), generate_episode(map, 2, 4, config)};
}

}  // namespace

TEST_CASE("round trip reproduces episodes deep-equal") {
  TempDir tmp;
  const auto episodes = tiny_dataset();
  write_dataset(episodes, tmp.path);
  const auto loaded = read_dataset(tmp.path);
  REQUIRE(loaded.size() == episodes.size());
  for (size_t i = 0; i < episodes.size(); ++i) {
    CHECK(deep_equal(episodes[i], loaded[i]));
    CHECK(loaded[i].seed == episodes[i].seed);
    CHECK(loaded[i].world_ref == episodes[i].world_ref);
    CHECK(loaded[i].actions.size() == loaded[i].frames.size() - 1);
  }
  // Second write produces byte-identical files.
  TempDir tmp2;
  write_dataset(episodes, tmp2.path);
  for (const auto& entry : fs::recursive_directory_iterator(tmp.path)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), tmp.path);
    std::ifstream a(entry.path(), std::ios::binary), b(tmp2.path / rel, std::ios::binary);
    REQUIRE(a.good());
    REQUIRE(b.good());
    const std::string ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);
  }
}

TEST_CASE("empty dataset round trips") {
  TempDir tmp;
  write_dataset({}, tmp.path);
  CHECK(read_dataset(tmp.path).empty());
}

TEST_CASE("missing root manifest is a format error") {
  TempDir tmp;
  CHECK_THROWS_AS(read_dataset(tmp.path), FormatError);
}

TEST_CASE("missing episode manifest is a format error naming the file") {
  TempDir tmp;
  write_dataset(tiny_dataset(), tmp.path);
  fs::remove(tmp.path / "episode_00001" / "manifest.json");
  try {
    read_dataset(tmp.path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("episode_00001") != std::string::npos);
  }
}

TEST_CASE("truncated array file is a format error naming the file") {
  TempDir tmp;
  write_dataset(tiny_dataset(), tmp.path);
  const fs::path victim = tmp.path / "episode_00000" / "poses.bin";
  fs::resize_file(victim, fs::file_size(victim) - 4);
  try {
    read_dataset(tmp.path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("poses.bin") != std::string::npos);
  }
}

TEST_CASE("corrupt json in the manifest is a format error") {
  TempDir tmp;
  write_dataset(tiny_dataset(), tmp.path);
  std::ofstream out(tmp.path / "episode_00000" / "manifest.json", std::ios::trunc);
  out << "{ not json";
  out.close();
  CHECK_THROWS_AS(read_dataset(tmp.path), FormatError);
}

TEST_CASE("manifest dtype outside the contract is rejected") {
  TempDir tmp;
  write_dataset(tiny_dataset(), tmp.path);
  const fs::path mpath = tmp.path / "episode_00000" / "manifest.json";
  std::ifstream in(mpath);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto at = text.find("\"f32\"");
  REQUIRE(at != std::string::npos);
  text.replace(at, 5, "\"f64\"");
  std::ofstream out(mpath, std::ios::trunc);
  out << text;
  out.close();
  CHECK_THROWS_AS(read_dataset(tmp.path), FormatError);
}

TEST_CASE("stored form matches the float form field by field") {
  const auto episodes = tiny_dataset();
  const StoredEpisode stored = store_episode(episodes[0]);
  CHECK(stored.frame_count == static_cast<int>(episodes[0].frames.size()));
  CHECK(stored.box_offsets.size() == episodes[0].frames.size() + 1);
  const Episode back = unpack_episode(stored);
  CHECK(deep_equal(episodes[0], back));

  // Image u8 encoding is exact for palette values.
  const ImageF img = decode_image(stored.camera, stored.image_size, 0);
  CHECK((img.planes - episodes[0].frames[0].camera.planes).cwiseAbs().maxCoeff() == 0.0f);

  // Boxes come back with unit scores.
  for (int t = 0; t < stored.frame_count; ++t) {
    const auto boxes = stored_boxes(stored, t);
    REQUIRE(boxes.size() == episodes[0].frames[static_cast<size_t>(t)].gt_boxes.size());
    for (size_t i = 0; i < boxes.size(); ++i) {
      CHECK(boxes[i].score == 1.0);
      CHECK(boxes[i].cx == episodes[0].frames[static_cast<size_t>(t)].gt_boxes[i].cx);
    }
  }
}
