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

// Reference implementations used only by tests. Each one computes a
// quantity the library also computes, but by an unrelated method, so a
// shared bug in both paths is unlikely.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "latperc/box.hpp"
#include "latperc/common.hpp"
#include "latperc/rng.hpp"

namespace latperc::oracle {

/// Monte-Carlo IoU: sample the joint bounding rectangle uniformly and
/// count membership. Standard error at 1e7 samples is far below 0.01.
inline double mc_iou(const OrientedBox& a, const OrientedBox& b, int64_t samples, uint64_t seed) {
  double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
  for (const OrientedBox* box : {&a, &b}) {
    for (const Vec2& c : box->corners()) {
      lo_x = std::min(lo_x, c.x());
      hi_x = std::max(hi_x, c.x());
      lo_y = std::min(lo_y, c.y());
      hi_y = std::max(hi_y, c.y());
    }
  }
  Rng rng(seed);
  int64_t in_union = 0, in_both = 0;
  for (int64_t i = 0; i < samples; ++i) {
    const Vec2 p{rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)};
    const bool ia = a.contains(p), ib = b.contains(p);
    if (ia || ib) ++in_union;
    if (ia && ib) ++in_both;
  }
  if (in_union == 0) return 0.0;
  return static_cast<double>(in_both) / static_cast<double>(in_union);
}

/// Gauss-Legendre node/weight pairs on [lo, hi], composite over panels.
/// Used to integrate Gaussian integrands to ~1e-12 without any closed form.
inline void gauss_legendre_panels(double lo, double hi, int panels, std::vector<double>* nodes,
                                  std::vector<double>* weights) {
  // 16-point rule per panel; abscissas/weights for [-1, 1].
  static const double xs[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                               0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                               0.9445750230732326, 0.9894009349916499};
  static const double ws[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                               0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                               0.0622535239386479, 0.0271524594117541};
  nodes->clear();
  weights->clear();
  const double step = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * step, b = a + step;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int k = 0; k < 8; ++k) {
      nodes->push_back(mid - half * xs[k]);
      weights->push_back(half * ws[k]);
      nodes->push_back(mid + half * xs[k]);
      weights->push_back(half * ws[k]);
    }
  }
}

/// KL(q || p) between two univariate Gaussians by numeric quadrature of
/// q(x) * (log q(x) - log p(x)) over +-12 sigma of q.
inline double quadrature_kl_1d(double mu_q, double log_std_q, double mu_p, double log_std_p) {
  const double sq = std::exp(log_std_q);
  std::vector<double> xs, ws;
  gauss_legendre_panels(mu_q - 12.0 * sq, mu_q + 12.0 * sq, 64, &xs, &ws);
  auto log_pdf = [](double x, double mu, double log_std) {
    const double s = std::exp(log_std);
    const double z = (x - mu) / s;
    return -0.5 * z * z - log_std - 0.5 * std::log(2.0 * kPi);
  };
  double acc = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double lq = log_pdf(xs[i], mu_q, log_std_q);
    const double lp = log_pdf(xs[i], mu_p, log_std_p);
    acc += ws[i] * std::exp(lq) * (lq - lp);
  }
  return acc;
}

/// Area under a precision-recall curve by the all-point interpolation
/// rule, computed as the exact integral of the running-max-from-the-right
/// precision envelope over recall. Works directly on (recall, precision)
/// pairs sorted by recall.
inline double ap_from_pr_points(std::vector<std::pair<double, double>> pr) {
  std::sort(pr.begin(), pr.end());
  double ap = 0.0, prev_recall = 0.0;
  for (size_t i = 0; i < pr.size(); ++i) {
    double best = 0.0;
    for (size_t j = i; j < pr.size(); ++j) best = std::max(best, pr[j].second);
    ap += (pr[i].first - prev_recall) * best;
    prev_recall = pr[i].first;
  }
  return ap;
}

}  // namespace latperc::oracle
