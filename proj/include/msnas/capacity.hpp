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
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "msnas/error.hpp"
#include "msnas/search_space.hpp"

namespace msnas {

// Macro skeleton used to count FLOPs. Cells are laid out in three
// stages separated by reduction cells; stage widths are c, 2c, 4c.
struct MacroConfig {
  int num_cells = 8;
  std::vector<int> reduction_positions{2, 5};
  int input_resolution = 32;
  int num_classes = 10;
  int init_channels = 44;
  // Stem output width is stem_multiplier * init_channels.
  int stem_multiplier = 3;

  void validate() const {
    if (num_cells <= 0) throw ConfigError("num_cells must be positive");
    if (init_channels < 1) throw ConfigError("init_channels must be >= 1");
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (stem_multiplier < 1) throw ConfigError("stem_multiplier must be >= 1");
    for (std::size_t i = 0; i < reduction_positions.size(); ++i) {
      const int p = reduction_positions[i];
      if (p < 0 || p >= num_cells) {
        throw ConfigError("reduction position " + std::to_string(p) + " outside [0, num_cells)");
      }
      if (i > 0 && p <= reduction_positions[i - 1]) {
        throw ConfigError("reduction positions must be strictly increasing");
      }
    }
    const int divisor = 1 << reduction_positions.size();
    if (input_resolution <= 0 || input_resolution % divisor != 0) {
      throw ConfigError("input_resolution " + std::to_string(input_resolution) +
                        " not divisible by " + std::to_string(divisor));
    }
  }

  bool is_reduction(int cell) const {
    return std::find(reduction_positions.begin(), reduction_positions.end(), cell) !=
           reduction_positions.end();
  }

  MacroConfig with_channels(int c) const {
    MacroConfig m = *this;
    m.init_channels = c;
    return m;
  }
};

// Millions of multiply-accumulates.
struct CapacityMFLOPs {
  double value = 0.0;
  friend auto operator<=>(const CapacityMFLOPs&, const CapacityMFLOPs&) = default;
};

namespace detail {

// MACs of one edge op producing `width` channels at `res` x `res`.
// Strided edges (reduction-cell edges leaving an input node) downsample
// with a 1x1 projection where the op has no strided conv of its own.
inline std::int64_t edge_macs(OpKind op, std::int64_t res, std::int64_t width, bool strided) {
  const std::int64_t area = res * res;
  const std::int64_t pointwise = area * width * width;
  const std::int64_t depthwise = area * 9 * width;
  switch (op) {
    case OpKind::kNone:
      return 0;
    case OpKind::kSkip:
      return strided ? pointwise : 0;
    case OpKind::kSepConv3x3:
      return 2 * (depthwise + pointwise);
    case OpKind::kResSepConv3x3:
      return 2 * (depthwise + pointwise) + area * width + (strided ? pointwise : 0);
  }
  return 0;
}

// The cell genotype used at position `pos` of the macro layout.
inline const CellTopology& unrolled_cell(const Topology& t, const MacroConfig& m, int pos) {
  if (t.layout() == Layout::kCellWise) {
    if (t.cells().size() != static_cast<std::size_t>(m.num_cells)) {
      throw ConfigError("cell-wise topology has " + std::to_string(t.cells().size()) +
                        " cells but macro expects " + std::to_string(m.num_cells));
    }
    return t.cell(static_cast<std::size_t>(pos));
  }
  if (m.is_reduction(pos)) return t.cell(kReduction);
  int stage = 0;
  for (int r : m.reduction_positions) stage += r < pos ? 1 : 0;
  return t.cell(static_cast<std::size_t>(std::min(stage, 2)));
}

}  // namespace detail

// Multiply-accumulate count of Aug(topology, c): stem + cells + classifier.
inline std::int64_t flops_macs(const Topology& t, const MacroConfig& m) {
  m.validate();
  const std::int64_t c = m.init_channels;
  std::int64_t res = m.input_resolution;
  const std::int64_t stem_width = m.stem_multiplier * c;
  std::int64_t total = res * res * 9 * 3 * stem_width;

  // Output widths of the two preceding cells and resolution of the last.
  std::int64_t prev_prev_w = stem_width;
  std::int64_t prev_w = stem_width, prev_res = res;
  std::int64_t width = c;
  const auto edges = admissible_edges();
  for (int pos = 0; pos < m.num_cells; ++pos) {
    const bool reduction = m.is_reduction(pos);
    if (reduction) width *= 2;
    const std::int64_t in_res = prev_res;
    const std::int64_t out_res = reduction ? in_res / 2 : in_res;
    // 1x1 preprocessing of both inputs to `width` at the input resolution.
    total += in_res * in_res * prev_prev_w * width;
    total += in_res * in_res * prev_w * width;
    const CellTopology& cell = detail::unrolled_cell(t, m, pos);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const bool strided = reduction && edges[k].from < kNumInputNodes;
      total += detail::edge_macs(cell.op(k), out_res, width, strided);
    }
    prev_prev_w = prev_w;
    prev_w = 4 * width;
    prev_res = out_res;
  }
  total += prev_w * m.num_classes;
  return total;
}

inline CapacityMFLOPs flops_total(const Topology& t, const MacroConfig& m) {
  return {static_cast<double>(flops_macs(t, m)) / 1e6};
}

inline std::vector<CapacityMFLOPs> capacity_profile(const Topology& t,
                                                    const std::vector<int>& channels,
                                                    const MacroConfig& macro_template = {}) {
  if (channels.empty()) throw ParameterError("capacity_profile: empty channel list");
  for (std::size_t i = 1; i < channels.size(); ++i) {
    if (channels[i] <= channels[i - 1]) {
      throw ParameterError("capacity_profile: channel list must be strictly increasing");
    }
  }
  std::vector<CapacityMFLOPs> out;
  out.reserve(channels.size());
  for (int c : channels) out.push_back(flops_total(t, macro_template.with_channels(c)));
  return out;
}

struct ChannelSolution {
  int channels = 1;
  double mflops = 0.0;
  // Target lies below the c = 1 capacity; channels is clamped to 1.
  bool below_minimum = false;
};

// argmin over positive integers c of |cost(c) - target| for a
// non-decreasing cost; ties go to the smaller c. Doubles c until the
// cost reaches the target, then scans the bracket.
template <typename CostFn>
ChannelSolution solve_channels_for(CostFn&& cost, double target_mflops) {
  const double at_one = cost(1);
  if (target_mflops <= at_one) {
    return {1, at_one, target_mflops < at_one};
  }
  int hi = 1;
  while (cost(hi) < target_mflops) {
    if (hi > (1 << 24)) throw ParameterError("solve_channels: target unreachable");
    hi *= 2;
  }
  const int lo = std::max(1, hi / 2);
  ChannelSolution best{lo, cost(lo), false};
  double best_gap = std::abs(best.mflops - target_mflops);
  for (int c = lo + 1; c <= hi; ++c) {
    const double v = cost(c);
    const double gap = std::abs(v - target_mflops);
    if (gap < best_gap) {
      best = {c, v, false};
      best_gap = gap;
    }
  }
  return best;
}

inline ChannelSolution solve_channels(const Topology& t, double target_mflops,
                                      const MacroConfig& macro_template = {}) {
  return solve_channels_for(
      [&](int c) { return flops_total(t, macro_template.with_channels(c)).value; },
      target_mflops);
}

}  // namespace msnas
