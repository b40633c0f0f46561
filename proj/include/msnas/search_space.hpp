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

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "msnas/error.hpp"
#include "msnas/hash.hpp"

namespace msnas {

// Candidate operation on a cell edge. kNone removes the edge from the
// computation.
enum class OpKind : std::uint8_t {
  kNone = 0,
  kSkip = 1,
  kSepConv3x3 = 2,
  kResSepConv3x3 = 3,
};

inline constexpr std::array<OpKind, 4> kAllOps = {
    OpKind::kNone, OpKind::kSkip, OpKind::kSepConv3x3, OpKind::kResSepConv3x3};
inline constexpr int kNumOps = 4;

constexpr std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::kNone:
      return "none";
    case OpKind::kSkip:
      return "skip";
    case OpKind::kSepConv3x3:
      return "sep_conv_3x3";
    case OpKind::kResSepConv3x3:
      return "res_sep_conv_3x3";
  }
  return "none";
}

inline std::optional<OpKind> parse_op(std::string_view name) {
  for (OpKind op : kAllOps) {
    if (op_name(op) == name) return op;
  }
  return std::nullopt;
}

constexpr bool is_conv(OpKind op) {
  return op == OpKind::kSepConv3x3 || op == OpKind::kResSepConv3x3;
}

// Nodes 0 and 1 are the cell inputs (outputs of the two preceding
// cells); nodes 2..5 are internal. Every internal node may take any
// earlier node as input.
inline constexpr int kNumNodes = 6;
inline constexpr int kNumInputNodes = 2;
inline constexpr int kEdgesPerCell = 14;

struct Edge {
  int from;
  int to;
  friend constexpr bool operator==(const Edge&, const Edge&) = default;
};

// Canonical edge order: grouped by destination node, then by source.
constexpr std::array<Edge, kEdgesPerCell> admissible_edges() {
  std::array<Edge, kEdgesPerCell> edges{};
  std::size_t k = 0;
  for (int to = kNumInputNodes; to < kNumNodes; ++to) {
    for (int from = 0; from < to; ++from) edges[k++] = Edge{from, to};
  }
  return edges;
}

// Position of edge (from, to) in the canonical order, or -1.
constexpr int edge_index(int from, int to) {
  const auto edges = admissible_edges();
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (edges[k].from == from && edges[k].to == to) return static_cast<int>(k);
  }
  return -1;
}

class CellTopology {
 public:
  using OpArray = std::array<OpKind, kEdgesPerCell>;

  CellTopology() { ops_.fill(OpKind::kNone); }
  explicit CellTopology(const OpArray& ops) : ops_(ops) {}

  static CellTopology filled(OpKind op) {
    OpArray ops;
    ops.fill(op);
    return CellTopology(ops);
  }

  OpKind op(std::size_t edge) const { return ops_.at(edge); }
  const OpArray& ops() const { return ops_; }

  CellTopology with_op(std::size_t edge, OpKind op) const {
    CellTopology copy = *this;
    copy.ops_.at(edge) = op;
    return copy;
  }

  friend bool operator==(const CellTopology&, const CellTopology&) = default;

 private:
  OpArray ops_;
};

enum class Layout : std::uint8_t { kCellWise, kStageWise };

constexpr std::size_t cells_for(Layout layout) {
  return layout == Layout::kCellWise ? 8 : 4;
}

constexpr std::string_view layout_name(Layout layout) {
  return layout == Layout::kCellWise ? "cell_wise" : "stage_wise";
}

inline std::optional<Layout> parse_layout(std::string_view name) {
  if (name == "cell_wise") return Layout::kCellWise;
  if (name == "stage_wise") return Layout::kStageWise;
  return std::nullopt;
}

// Stage-wise topologies hold their shared cells in this order.
enum StageCell : std::size_t { kS0 = 0, kS1 = 1, kS2 = 2, kReduction = 3 };

// A full candidate architecture. Immutable once built; the id is a
// content hash over layout and cells in canonical order, so equal
// topologies have equal ids.
class Topology {
 public:
  Topology(Layout layout, std::vector<CellTopology> cells)
      : layout_(layout), cells_(std::move(cells)) {
    if (cells_.size() != cells_for(layout_)) {
      throw SchemaError("cells: layout " + std::string(layout_name(layout_)) +
                        " requires " + std::to_string(cells_for(layout_)) +
                        " cells, got " + std::to_string(cells_.size()));
    }
    id_ = compute_id();
  }

  Layout layout() const { return layout_; }
  const std::vector<CellTopology>& cells() const { return cells_; }
  const CellTopology& cell(std::size_t i) const { return cells_.at(i); }
  const std::string& id() const { return id_; }

  // Base-4 digits of every edge op; canonical content string.
  std::string canonical_string() const {
    std::string s(layout_name(layout_));
    s.push_back(':');
    for (const auto& c : cells_) {
      for (OpKind op : c.ops()) s.push_back(static_cast<char>('0' + static_cast<int>(op)));
      s.push_back('|');
    }
    return s;
  }

  friend bool operator==(const Topology& a, const Topology& b) {
    return a.layout_ == b.layout_ && a.cells_ == b.cells_;
  }

 private:
  std::string compute_id() const {
    return detail::to_hex(detail::fnv1a(canonical_string()));
  }

  Layout layout_;
  std::vector<CellTopology> cells_;
  std::string id_;
};

inline Topology uniform_topology(Layout layout, OpKind op) {
  return Topology(layout, std::vector<CellTopology>(cells_for(layout),
                                                    CellTopology::filled(op)));
}

template <typename Rng>
Topology sample_random(Rng& rng, Layout layout) {
  std::uniform_int_distribution<int> pick(0, kNumOps - 1);
  std::vector<CellTopology> cells;
  cells.reserve(cells_for(layout));
  for (std::size_t c = 0; c < cells_for(layout); ++c) {
    CellTopology::OpArray ops;
    for (auto& op : ops) op = static_cast<OpKind>(pick(rng));
    cells.emplace_back(ops);
  }
  return Topology(layout, std::move(cells));
}

inline Topology sample_random(std::uint64_t seed, Layout layout) {
  std::mt19937_64 rng(seed);
  return sample_random(rng, layout);
}

// Flips exactly one edge: uniform cell, uniform edge, new op uniform over
// the three other ops.
template <typename Rng>
Topology mutate(const Topology& parent, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick_cell(0, parent.cells().size() - 1);
  std::uniform_int_distribution<std::size_t> pick_edge(0, kEdgesPerCell - 1);
  std::uniform_int_distribution<int> pick_shift(1, kNumOps - 1);
  const std::size_t c = pick_cell(rng);
  const std::size_t e = pick_edge(rng);
  const int old_op = static_cast<int>(parent.cell(c).op(e));
  const auto new_op = static_cast<OpKind>((old_op + pick_shift(rng)) % kNumOps);
  std::vector<CellTopology> cells = parent.cells();
  cells[c] = cells[c].with_op(e, new_op);
  return Topology(parent.layout(), std::move(cells));
}

inline Topology mutate(const Topology& parent, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return mutate(parent, rng);
}

// Number of edge assignments that differ; topologies must share a layout.
inline int edit_distance(const Topology& a, const Topology& b) {
  if (a.layout() != b.layout()) {
    throw ParameterError("edit_distance: layouts differ");
  }
  int d = 0;
  for (std::size_t c = 0; c < a.cells().size(); ++c) {
    for (std::size_t e = 0; e < kEdgesPerCell; ++e) {
      d += a.cell(c).op(e) != b.cell(c).op(e) ? 1 : 0;
    }
  }
  return d;
}

struct SpaceSize {
  boost::multiprecision::cpp_int exact;
  double log10;

  std::string decimal() const { return exact.str(); }
};

inline SpaceSize space_size(Layout layout) {
  const unsigned edges = static_cast<unsigned>(kEdgesPerCell * cells_for(layout));
  // 4^edges == 2^(2 * edges)
  boost::multiprecision::cpp_int exact = 1;
  exact <<= 2 * edges;
  return {exact, static_cast<double>(edges) * std::log10(4.0)};
}

struct TopologyFeatures {
  std::array<int, kNumOps> op_counts{};
  double edge_density = 0.0;
  double conv_fraction = 0.0;
};

// Counts over the genotype: a shared stage-wise cell is counted once.
inline TopologyFeatures features(const Topology& t) {
  TopologyFeatures f;
  for (const auto& cell : t.cells()) {
    for (OpKind op : cell.ops()) ++f.op_counts[static_cast<std::size_t>(op)];
  }
  const double total = static_cast<double>(kEdgesPerCell * t.cells().size());
  const int none = f.op_counts[static_cast<std::size_t>(OpKind::kNone)];
  const int conv = f.op_counts[static_cast<std::size_t>(OpKind::kSepConv3x3)] +
                   f.op_counts[static_cast<std::size_t>(OpKind::kResSepConv3x3)];
  f.edge_density = (total - none) / total;
  f.conv_fraction = conv / total;
  return f;
}

inline nlohmann::json to_json(const Topology& t) {
  nlohmann::json cells = nlohmann::json::array();
  const auto edges = admissible_edges();
  for (const auto& cell : t.cells()) {
    nlohmann::json records = nlohmann::json::array();
    for (std::size_t k = 0; k < edges.size(); ++k) {
      records.push_back({{"from", edges[k].from},
                         {"to", edges[k].to},
                         {"op", std::string(op_name(cell.op(k)))}});
    }
    cells.push_back(std::move(records));
  }
  return {{"layout", std::string(layout_name(t.layout()))}, {"cells", std::move(cells)}};
}

inline Topology topology_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("topology: expected a JSON object");
  if (!doc.contains("layout") || !doc["layout"].is_string()) {
    throw SchemaError("layout: missing or not a string");
  }
  const auto layout = parse_layout(doc["layout"].get<std::string>());
  if (!layout) {
    throw SchemaError("layout: unknown value '" + doc["layout"].get<std::string>() + "'");
  }
  if (!doc.contains("cells") || !doc["cells"].is_array()) {
    throw SchemaError("cells: missing or not an array");
  }
  const auto& cells_doc = doc["cells"];
  if (cells_doc.size() != cells_for(*layout)) {
    throw SchemaError("cells: layout " + std::string(layout_name(*layout)) + " requires " +
                      std::to_string(cells_for(*layout)) + " cells, got " +
                      std::to_string(cells_doc.size()));
  }
  const auto edges = admissible_edges();
  std::vector<CellTopology> cells;
  for (std::size_t c = 0; c < cells_doc.size(); ++c) {
    const auto& recs = cells_doc[c];
    const std::string where = "cells[" + std::to_string(c) + "]";
    if (!recs.is_array() || recs.size() != edges.size()) {
      throw SchemaError(where + ": expected " + std::to_string(edges.size()) + " edges, got " +
                        (recs.is_array() ? std::to_string(recs.size()) : "non-array"));
    }
    CellTopology::OpArray ops;
    for (std::size_t k = 0; k < recs.size(); ++k) {
      const auto& r = recs[k];
      const std::string ewhere = where + "[" + std::to_string(k) + "]";
      if (!r.is_object() || !r.contains("from") || !r.contains("to") || !r.contains("op") ||
          !r["from"].is_number_integer() || !r["to"].is_number_integer() || !r["op"].is_string()) {
        throw SchemaError(ewhere + ": expected {from:int, to:int, op:string}");
      }
      if (r["from"].get<int>() != edges[k].from || r["to"].get<int>() != edges[k].to) {
        throw SchemaError(ewhere + ".from/to: edge out of canonical order");
      }
      const auto name = r["op"].get<std::string>();
      const auto op = parse_op(name);
      if (!op) throw SchemaError(ewhere + ".op: unknown op '" + name + "'");
      ops[k] = *op;
    }
    cells.emplace_back(ops);
  }
  return Topology(*layout, std::move(cells));
}

inline std::string serialize(const Topology& t) { return to_json(t).dump(); }

inline Topology deserialize(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("topology: invalid JSON: ") + e.what());
  }
  return topology_from_json(doc);
}

}  // namespace msnas
