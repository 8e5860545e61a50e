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

#include "latperc/nn/params.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace latperc::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian f32");

namespace {

constexpr char kMagic[4] = {'L', 'P', 'C', 'K'};
constexpr uint32_t kVersion = 1;

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename Scalar>
void save_impl(const std::string& path, const std::vector<CheckpointSection<Scalar>>& sections,
               uint64_t config_hash, const std::map<std::string, int64_t>& extra) {
  nlohmann::json header;
  header["format"] = "latperc-checkpoint-v1";
  header["config_hash"] = hash_hex(config_hash);
  header["extra"] = extra;
  nlohmann::json table = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& sec : sections) {
    for (size_t i = 0; i < sec.store->size(); ++i) {
      const auto& [name, m] = sec.store->entry(i);
      table.push_back({{"name", sec.prefix + name},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"offset_floats", offset}});
      offset += m.size();
    }
  }
  header["tensors"] = std::move(table);
  const std::string header_text = header.dump();

  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + tmp);
  out.write(kMagic, 4);
  const uint32_t version = kVersion;
  const uint32_t header_len = static_cast<uint32_t>(header_text.size());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&header_len), 4);
  out.write(header_text.data(), header_len);
  std::vector<float> buf;
  for (const auto& sec : sections) {
    for (size_t i = 0; i < sec.store->size(); ++i) {
      const auto& m = sec.store->entry(i).second;
      buf.resize(static_cast<size_t>(m.size()));
      for (Eigen::Index e = 0; e < m.size(); ++e) {
        buf[static_cast<size_t>(e)] = static_cast<float>(m.data()[e]);
      }
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
  }
  out.close();
  if (!out) throw FormatError("short write while saving checkpoint: " + tmp);
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw FormatError("cannot move checkpoint into place: " + path);
  }
}

struct ParsedHeader {
  nlohmann::json json;
  std::streampos payload_start;
};

ParsedHeader read_header(std::ifstream& in, const std::string& path) {
  char magic[4];
  uint32_t version = 0, header_len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&header_len), 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("not a checkpoint file: " + path);
  }
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  }
  std::string text(header_len, '\0');
  in.read(text.data(), header_len);
  if (!in) throw FormatError("truncated checkpoint header: " + path);
  ParsedHeader parsed;
  try {
    parsed.json = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint header in " + path + ": " + e.what());
  }
  parsed.payload_start = in.tellg();
  return parsed;
}

uint64_t parse_hash(const nlohmann::json& header, const std::string& path) {
  const std::string hex = header.value("config_hash", "");
  if (hex.size() != 16) throw FormatError("missing config_hash in " + path);
  return std::stoull(hex, nullptr, 16);
}

template <typename Scalar>
std::map<std::string, int64_t> load_impl(const std::string& path,
                                         const std::vector<CheckpointSection<Scalar>>& sections,
                                         uint64_t expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  ParsedHeader parsed = read_header(in, path);
  const uint64_t stored = parse_hash(parsed.json, path);
  if (stored != expected_hash) {
    throw FormatError("checkpoint " + path + " was written for config " + hash_hex(stored) +
                      ", expected " + hash_hex(expected_hash));
  }

  // Index the archive's tensor table, then satisfy every section tensor.
  struct Entry {
    Eigen::Index rows, cols;
    int64_t offset;
    bool used = false;
  };
  std::map<std::string, Entry> archive;
  for (const auto& row : parsed.json.at("tensors")) {
    archive[row.at("name")] = {row.at("rows").template get<Eigen::Index>(),
                               row.at("cols").template get<Eigen::Index>(),
                               row.at("offset_floats").template get<int64_t>()};
  }
  std::vector<float> buf;
  for (const auto& sec : sections) {
    for (size_t i = 0; i < sec.store->size(); ++i) {
      auto& [name, m] = sec.store->entry(i);
      const std::string full = sec.prefix + name;
      auto it = archive.find(full);
      if (it == archive.end()) throw FormatError("checkpoint " + path + " lacks tensor " + full);
      Entry& e = it->second;
      if (e.rows != m.rows() || e.cols != m.cols()) {
        throw FormatError("checkpoint tensor " + full + " is " + std::to_string(e.rows) + "x" +
                          std::to_string(e.cols) + ", model expects " + std::to_string(m.rows()) +
                          "x" + std::to_string(m.cols()));
      }
      e.used = true;
      buf.resize(static_cast<size_t>(m.size()));
      in.seekg(parsed.payload_start + static_cast<std::streamoff>(e.offset * sizeof(float)));
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
      if (!in) throw FormatError("truncated checkpoint payload in " + path + " at " + full);
      for (Eigen::Index el = 0; el < m.size(); ++el) {
        m.data()[el] = static_cast<Scalar>(buf[static_cast<size_t>(el)]);
      }
    }
  }
  for (const auto& [name, e] : archive) {
    if (!e.used) throw FormatError("checkpoint " + path + " has unexpected tensor " + name);
  }
  std::map<std::string, int64_t> extra;
  if (parsed.json.contains("extra")) {
    for (const auto& [k, v] : parsed.json.at("extra").items()) {
      extra[k] = v.template get<int64_t>();
    }
  }
  return extra;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointSection<float>>& sections,
                     uint64_t config_hash, const std::map<std::string, int64_t>& extra) {
  save_impl(path, sections, config_hash, extra);
}
void save_checkpoint(const std::string& path,
                     const std::vector<CheckpointSection<double>>& sections, uint64_t config_hash,
                     const std::map<std::string, int64_t>& extra) {
  save_impl(path, sections, config_hash, extra);
}

std::map<std::string, int64_t> load_checkpoint(
    const std::string& path, const std::vector<CheckpointSection<float>>& sections,
    uint64_t expected_hash) {
  return load_impl(path, sections, expected_hash);
}
std::map<std::string, int64_t> load_checkpoint(
    const std::string& path, const std::vector<CheckpointSection<double>>& sections,
    uint64_t expected_hash) {
  return load_impl(path, sections, expected_hash);
}

uint64_t peek_checkpoint_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  ParsedHeader parsed = read_header(in, path);
  return parse_hash(parsed.json, path);
}

std::map<std::string, int64_t> peek_checkpoint_extra(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  ParsedHeader parsed = read_header(in, path);
  std::map<std::string, int64_t> extra;
  if (parsed.json.contains("extra")) {
    try {
      for (const auto& [k, v] : parsed.json.at("extra").items()) {
        extra[k] = v.template get<int64_t>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed extra block in checkpoint " + path + ": " + e.what());
    }
  }
  return extra;
}

}  // namespace latperc::nn
