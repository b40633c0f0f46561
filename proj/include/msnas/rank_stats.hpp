// Copyright 2026 The msnas Authors.
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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "msnas/error.hpp"

namespace msnas {

struct RankStatistic {
  double value = 0.0;
  std::size_t n = 0;
};

namespace detail {

inline void check_pair(std::span<const double> xs, std::span<const double> ys, const char* what) {
  if (xs.size() != ys.size()) {
    throw ParameterError(std::string(what) + ": length mismatch (" + std::to_string(xs.size()) +
                         " vs " + std::to_string(ys.size()) + ")");
  }
  if (xs.size() < 2) {
    throw ParameterError(std::string(what) + ": needs at least 2 samples");
  }
}

inline bool constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
}

}  // namespace detail

// 1-based fractional ranks; tied values share the average of their ranks.
inline std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Pearson correlation of average ranks.
inline RankStatistic spearman(std::span<const double> xs, std::span<const double> ys) {
  detail::check_pair(xs, ys, "spearman");
  if (detail::constant(xs) || detail::constant(ys)) {
    throw DegenerateInputError("spearman: zero rank variance");
  }
  const auto rx = fractional_ranks(xs);
  const auto ry = fractional_ranks(ys);
  return {pearson(rx, ry), xs.size()};
}

// Tau-a: (concordant - discordant) / C(n, 2); a pair tied in either
// vector counts as neither.
inline RankStatistic kendall_tau(std::span<const double> xs, std::span<const double> ys) {
  detail::check_pair(xs, ys, "kendall_tau");
  if (detail::constant(xs) || detail::constant(ys)) {
    throw DegenerateInputError("kendall_tau: zero rank variance");
  }
  const std::size_t n = xs.size();
  long long score = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = xs[i] - xs[j];
      const double dy = ys[i] - ys[j];
      const double s = dx * dy;
      score += s > 0 ? 1 : (s < 0 ? -1 : 0);
    }
  }
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return {static_cast<double>(score) / pairs, n};
}

// Indices of the k largest scores; ties keep input order.
inline std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(k, order.size()));
  return order;
}

// |topK(proxy) ∩ topK(true)| / k.
inline RankStatistic precision_at_k(std::span<const double> proxy, std::span<const double> truth,
                                    std::size_t k) {
  if (proxy.size() != truth.size()) throw ParameterError("precision_at_k: length mismatch");
  if (k < 1) throw ParameterError("precision_at_k: k must be >= 1");
  if (k > proxy.size()) {
    throw ParameterError("precision_at_k: k=" + std::to_string(k) + " exceeds n=" +
                         std::to_string(proxy.size()));
  }
  auto a = top_k_indices(proxy, k);
  auto b = top_k_indices(truth, k);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return {static_cast<double>(common.size()) / static_cast<double>(k), proxy.size()};
}

}  // namespace msnas
