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

#include "latperc/nn/tape.hpp"

#include <array>
#include <map>

namespace latperc::nn {

const ColMap& col_map(int h, int w, int k, int stride, int pad) {
  if (h <= 0 || w <= 0 || k <= 0 || stride <= 0 || pad < 0) {
    throw ContractError("col_map: non-positive convolution geometry");
  }
  if (h + 2 * pad < k || w + 2 * pad < k) {
    throw ContractError("col_map: kernel larger than padded input");
  }
  static std::map<std::array<int, 5>, ColMap> cache;
  const std::array<int, 5> key{h, w, k, stride, pad};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  ColMap map;
  map.taps = k * k;
  const int out_h = (h + 2 * pad - k) / stride + 1;
  const int out_w = (w + 2 * pad - k) / stride + 1;
  map.out_pixels = out_h * out_w;
  map.src.assign(static_cast<size_t>(map.taps) * map.out_pixels, -1);
  for (int dy = 0; dy < k; ++dy) {
    for (int dx = 0; dx < k; ++dx) {
      const int j = dy * k + dx;
      for (int oy = 0; oy < out_h; ++oy) {
        const int iy = oy * stride - pad + dy;
        if (iy < 0 || iy >= h) continue;
        for (int ox = 0; ox < out_w; ++ox) {
          const int ix = ox * stride - pad + dx;
          if (ix < 0 || ix >= w) continue;
          map.src[static_cast<size_t>(j) * map.out_pixels + oy * out_w + ox] = iy * w + ix;
        }
      }
    }
  }
  return cache.emplace(key, std::move(map)).first->second;
}

}  // namespace latperc::nn
