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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "latperc/common.hpp"
#include "latperc/rng.hpp"

namespace latperc::nn {

/// Flat named collection of dense tensors, insertion-ordered. Used for model
/// weights and for optimizer moment buffers.
template <typename Scalar>
class ParamStore {
 public:
  MatX<Scalar>& create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.count(name)) throw ContractError("ParamStore: duplicate tensor name " + name);
    index_[name] = tensors_.size();
    tensors_.emplace_back(name, MatX<Scalar>::Zero(rows, cols));
    return tensors_.back().second;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  MatX<Scalar>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("ParamStore: unknown tensor " + name);
    return tensors_[it->second].second;
  }
  const MatX<Scalar>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("ParamStore: unknown tensor " + name);
    return tensors_[it->second].second;
  }

  size_t size() const { return tensors_.size(); }
  const std::pair<std::string, MatX<Scalar>>& entry(size_t i) const { return tensors_[i]; }
  std::pair<std::string, MatX<Scalar>>& entry(size_t i) { return tensors_[i]; }

  Eigen::Index total_elements() const {
    Eigen::Index n = 0;
    for (const auto& [name, m] : tensors_) n += m.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& [name, m] : tensors_) {
      if (!m.allFinite()) return false;
    }
    return true;
  }

 private:
  std::vector<std::pair<std::string, MatX<Scalar>>> tensors_;
  std::map<std::string, size_t> index_;
};

/// Fill a weight matrix with He-style normal noise scaled for a leaky ReLU
/// of slope `leak`, seeded deterministically from the tensor's name so the
/// result does not depend on creation order.
template <typename Scalar>
void he_init(MatX<Scalar>* w, Eigen::Index fan_in, double leak, uint64_t seed,
             const std::string& name) {
  uint64_t tag = 1469598103934665603ull;  // FNV-1a over the name
  for (const char ch : name) {
    tag ^= static_cast<unsigned char>(ch);
    tag *= 1099511628211ull;
  }
  Rng rng = Rng(seed).child(tag);
  const double std_dev = std::sqrt(2.0 / ((1.0 + leak * leak) * static_cast<double>(fan_in)));
  for (Eigen::Index c = 0; c < w->cols(); ++c) {
    for (Eigen::Index r = 0; r < w->rows(); ++r) {
      (*w)(r, c) = static_cast<Scalar>(std_dev * rng.normal());
    }
  }
}

/// One named section of a checkpoint (e.g. the model weights, or an
/// optimizer moment store), serialized under a prefix.
template <typename Scalar>
struct CheckpointSection {
  std::string prefix;
  ParamStore<Scalar>* store = nullptr;
};

/// Write sections to a named-tensor archive: a magic/version preamble, a
/// JSON header (tensor table, config hash, caller extras), then raw f32
/// little-endian payloads in table order.
void save_checkpoint(const std::string& path, const std::vector<CheckpointSection<float>>& sections,
                     uint64_t config_hash, const std::map<std::string, int64_t>& extra);
void save_checkpoint(const std::string& path,
                     const std::vector<CheckpointSection<double>>& sections, uint64_t config_hash,
                     const std::map<std::string, int64_t>& extra);

/// Load an archive back into pre-created stores. Every tensor in the file
/// must land in a section tensor of identical shape and vice versa; the
/// stored config hash must equal `expected_hash`.
std::map<std::string, int64_t> load_checkpoint(const std::string& path,
                                               const std::vector<CheckpointSection<float>>& sections,
                                               uint64_t expected_hash);
std::map<std::string, int64_t> load_checkpoint(
    const std::string& path, const std::vector<CheckpointSection<double>>& sections,
    uint64_t expected_hash);

/// Config hash read without validating tensors, for error reporting and
/// tooling.
uint64_t peek_checkpoint_hash(const std::string& path);

/// Caller extras read without validating tensors, so tooling can learn
/// the run settings before building stores to load into.
std::map<std::string, int64_t> peek_checkpoint_extra(const std::string& path);

}  // namespace latperc::nn
