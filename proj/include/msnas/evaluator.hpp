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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "msnas/capacity.hpp"
#include "msnas/curvefit.hpp"
#include "msnas/error.hpp"
#include "msnas/hash.hpp"
#include "msnas/io.hpp"
#include "msnas/search_space.hpp"

namespace msnas {

// One supernet: its 1-based index and init channel count.
struct SupernetSpec {
  int index = 1;
  int init_channels = 12;
};

inline const std::vector<int>& default_channel_list() {
  static const std::vector<int> channels{12, 24, 30, 36, 40, 44, 54, 64};
  return channels;
}

inline std::vector<SupernetSpec> make_supernets(const std::vector<int>& channels) {
  if (channels.empty()) throw ConfigError("channel list is empty");
  std::vector<SupernetSpec> out;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] < 1) throw ConfigError("channel counts must be positive");
    if (i > 0 && channels[i] <= channels[i - 1]) {
      throw ConfigError("channel list must be strictly increasing");
    }
    out.push_back({static_cast<int>(i) + 1, channels[i]});
  }
  return out;
}

struct OneShotRecord {
  std::string topology_id;
  int supernet_index = 1;
  int init_channels = 0;
  double mflops = 0.0;
  double reward = 0.0;

  friend bool operator==(const OneShotRecord&, const OneShotRecord&) = default;
};

// Atomic counter that stays copyable.
class QueryCounter {
 public:
  QueryCounter() = default;
  QueryCounter(const QueryCounter& other) : value_(other.value()) {}
  QueryCounter& operator=(const QueryCounter& other) {
    value_.store(other.value());
    return *this;
  }
  void increment() const { value_.fetch_add(1, std::memory_order_relaxed); }
  std::int64_t value() const { return value_.load(std::memory_order_relaxed); }

 private:
  mutable std::atomic<std::int64_t> value_{0};
};

// Source of one-shot rewards r_i(topology) for supernets i = 1..K.
// Implementations answer concurrent queries without external locking and
// return identical records for identical queries.
class Evaluator {
 public:
  virtual ~Evaluator() = default;

  virtual const std::vector<SupernetSpec>& supernets() const = 0;

  OneShotRecord one_shot(const Topology& t, int supernet_index) const {
    if (supernet_index < 1 || supernet_index > static_cast<int>(supernets().size())) {
      throw LookupError("supernet index " + std::to_string(supernet_index) + " out of range 1.." +
                        std::to_string(supernets().size()));
    }
    queries_.increment();
    return query(t, supernet_index);
  }

  // Noiseless reward at a target capacity; only simulators have one.
  virtual double ground_truth_at(const Topology& t, double target_mflops) const {
    (void)t;
    (void)target_mflops;
    throw UnsupportedError("ground_truth_at is only available on the simulator backend");
  }

  std::int64_t query_count() const { return queries_.value(); }

 protected:
  virtual OneShotRecord query(const Topology& t, int supernet_index) const = 0;

 private:
  QueryCounter queries_;
};

inline constexpr std::string_view kRewardTableHeader =
    "topology_id,supernet_index,init_channels,mflops,reward";

// Reward table backed by stored records, keyed by (topology id, supernet).
class TabularEvaluator : public Evaluator {
 public:
  TabularEvaluator() = default;

  void add(const OneShotRecord& rec, std::size_t line = 0) {
    if (!(rec.reward >= 0.0 && rec.reward <= 1.0)) {
      throw BoundsError("reward " + io::format_double(rec.reward) + " outside [0, 1]", line);
    }
    if (!(rec.mflops >= 0.0) || !std::isfinite(rec.mflops)) {
      throw BoundsError("mflops must be a non-negative number", line);
    }
    if (rec.supernet_index < 1 || rec.init_channels < 1) {
      throw BoundsError("supernet_index and init_channels must be positive", line);
    }
    const auto key = std::make_pair(rec.topology_id, rec.supernet_index);
    if (index_.count(key) != 0) {
      throw DuplicateKeyError("duplicate key (" + rec.topology_id + ", " +
                                  std::to_string(rec.supernet_index) + ")",
                              line);
    }
    auto channel = channels_.find(rec.supernet_index);
    if (channel != channels_.end() && channel->second != rec.init_channels) {
      throw ParseError("supernet " + std::to_string(rec.supernet_index) +
                           " listed with two channel counts",
                       line);
    }
    channels_[rec.supernet_index] = rec.init_channels;
    index_.emplace(key, records_.size());
    records_.push_back(rec);
    supernets_.clear();
    for (const auto& [idx, ch] : channels_) supernets_.push_back({idx, ch});
  }

  const std::vector<SupernetSpec>& supernets() const override { return supernets_; }
  const std::vector<OneShotRecord>& records() const { return records_; }

  const OneShotRecord* find(const std::string& id, int supernet_index) const {
    auto it = index_.find(std::make_pair(id, supernet_index));
    return it == index_.end() ? nullptr : &records_[it->second];
  }

  const OneShotRecord& lookup(const std::string& id, int supernet_index) const {
    const auto* rec = find(id, supernet_index);
    if (rec == nullptr) {
      throw LookupError("no record for topology " + id + " in supernet " +
                        std::to_string(supernet_index));
    }
    return *rec;
  }

  std::string to_csv() const {
    std::string out(kRewardTableHeader);
    out.push_back('\n');
    for (const auto& r : records_) {
      out += r.topology_id + ',' + std::to_string(r.supernet_index) + ',' +
             std::to_string(r.init_channels) + ',' + io::format_double(r.mflops) + ',' +
             io::format_double(r.reward) + '\n';
    }
    return out;
  }

  static TabularEvaluator from_csv(std::string_view text) {
    const auto lines = io::lines_of(text);
    if (lines.empty() || lines[0] != kRewardTableHeader) {
      throw ParseError("expected header '" + std::string(kRewardTableHeader) + "'", 1);
    }
    TabularEvaluator table;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const std::size_t line_no = i + 1;
      if (lines[i].empty()) continue;
      const auto fields = io::split_csv_line(lines[i]);
      if (fields.size() != 5) {
        throw ParseError("expected 5 fields, got " + std::to_string(fields.size()), line_no);
      }
      OneShotRecord rec;
      rec.topology_id = fields[0];
      if (rec.topology_id.empty()) throw ParseError("empty topology_id", line_no);
      if (!io::parse_number(fields[1], rec.supernet_index) ||
          !io::parse_number(fields[2], rec.init_channels) ||
          !io::parse_number(fields[3], rec.mflops) || !io::parse_number(fields[4], rec.reward)) {
        throw ParseError("malformed numeric field", line_no);
      }
      table.add(rec, line_no);
    }
    table.check_supernets();
    return table;
  }

  static TabularEvaluator load(const std::string& path) {
    return from_csv(io::read_file(path));
  }

  void dump(const std::string& path) const { io::write_file(path, to_csv()); }

 protected:
  OneShotRecord query(const Topology& t, int supernet_index) const override {
    return lookup(t.id(), supernet_index);
  }

 private:
  void check_supernets() const {
    for (std::size_t i = 0; i < supernets_.size(); ++i) {
      if (supernets_[i].index != static_cast<int>(i) + 1) {
        throw ConfigError("supernet indices must be contiguous from 1");
      }
      if (i > 0 && supernets_[i].init_channels <= supernets_[i - 1].init_channels) {
        throw ConfigError("supernet channel counts must increase with index");
      }
    }
  }

  std::vector<OneShotRecord> records_;
  std::map<std::pair<std::string, int>, std::size_t> index_;
  std::map<int, int> channels_;
  std::vector<SupernetSpec> supernets_;
};

inline TabularEvaluator load_table(const std::string& path) {
  return TabularEvaluator::load(path);
}
inline void dump_table(const TabularEvaluator& table, const std::string& path) { table.dump(path); }

// Noiseless reward-vs-capacity curve of one topology. The combined reward
// is the family curve itself; clean and adversarial accuracy are fixed
// multiples of it chosen so that (1 - lambda) clean + lambda adv equals it.
struct GroundTruthCurve {
  FunctionFamily family = FunctionFamily::kLogPower;
  std::vector<double> params;  // fitting coordinates of the family
  double clean_scale = 1.05;
  double adv_scale = 0.95;

  double value(double x_mflops) const {
    return eval_family_raw(family, params, x_mflops / capacity_scale(family));
  }
  double clean(double x_mflops) const { return clean_scale * value(x_mflops); }
  double adv(double x_mflops) const { return adv_scale * value(x_mflops); }
  double reward(double x_mflops, double lambda) const {
    return (1.0 - lambda) * clean(x_mflops) + lambda * adv(x_mflops);
  }

  // LOG_POWER parameters of the clean / adversarial curves.
  std::vector<double> clean_params() const { return scaled_asymptote(clean_scale); }
  std::vector<double> adv_params() const { return scaled_asymptote(adv_scale); }

 private:
  std::vector<double> scaled_asymptote(double s) const {
    if (family != FunctionFamily::kLogPower) {
      throw UnsupportedError("clean/adv parameters are defined for log_power curves");
    }
    auto p = params;
    p[0] *= s;
    return p;
  }
};

// Knobs of the synthetic curve generator. Asymptote, midpoint and
// steepness are deterministic in the topology features plus seeded
// per-topology jitter.
struct CurveModel {
  double a0 = 0.25;
  double w_conv = 0.35;
  double w_density = 0.10;
  double a_jitter = 0.08;
  double midpoint_gflops = 0.12;
  double midpoint_conv = 1.0;
  double midpoint_jitter = 0.8;
  // Correlation between asymptote jitter and midpoint jitter; positive
  // values make better curves saturate later, so curves cross.
  double level_midpoint_corr = 0.98;
  double steepness = 1.2;
  double steepness_jitter = 0.2;
  double clean_gap = 0.05;
};

struct SimulatorConfig {
  std::uint64_t seed = 0;
  double noise_sigma = 0.01;
  double lambda = 0.5;
  std::vector<int> channel_list = default_channel_list();
  // A family name or "mixture".
  std::string family = "log_power";
  bool crossing_scenario = false;
  int crossing_pairs = 10;
  CurveModel curve;
  MacroConfig macro;

  void validate() const {
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in (0, 1]");
    if (family != "mixture" && !parse_family(family)) {
      throw ConfigError("unknown family '" + family + "'");
    }
    if (crossing_pairs < 0) throw ConfigError("crossing_pairs must be >= 0");
    make_supernets(channel_list);
    macro.validate();
  }
};

inline nlohmann::json to_json(const SimulatorConfig& c) {
  return {{"seed", c.seed},
          {"noise_sigma", c.noise_sigma},
          {"lambda", c.lambda},
          {"channel_list", c.channel_list},
          {"family", c.family},
          {"crossing_scenario", c.crossing_scenario},
          {"crossing_pairs", c.crossing_pairs}};
}

inline SimulatorConfig simulator_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("simulator config must be a JSON object");
  SimulatorConfig c;
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("noise_sigma")) c.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
    if (j.contains("channel_list")) c.channel_list = j.at("channel_list").get<std::vector<int>>();
    if (j.contains("family")) c.family = j.at("family").get<std::string>();
    if (j.contains("crossing_scenario")) c.crossing_scenario = j.at("crossing_scenario").get<bool>();
    if (j.contains("crossing_pairs")) c.crossing_pairs = j.at("crossing_pairs").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("simulator config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace detail {

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Family parameters whose curve has asymptote/level `level`, reaches
// roughly half of it near `midpoint` GFLOPs, with steepness `s`.
inline std::vector<double> family_params_for(FunctionFamily f, double level, double midpoint,
                                             double s) {
  switch (f) {
    case FunctionFamily::kLogPower:
      return {level, std::log(midpoint), -s};
    case FunctionFamily::kJanoschek:
      return {level, 0.0, std::log(2.0) / std::pow(midpoint, s), s};
    case FunctionFamily::kMmf:
      return {level, 0.1 * level, s, 1.0 / midpoint};
    case FunctionFamily::kVaporPressure:
      return {std::log(level), -0.7 * midpoint * s, 0.05};
    case FunctionFamily::kLogLogLinear: {
      const double hi = std::exp(0.9 * level);
      const double half = std::exp(0.5 * level);
      const double a = (hi - half) / (std::log(2.0) - std::log(midpoint));
      return {a, half - a * std::log(midpoint)};
    }
    case FunctionFamily::kIlog2: {
      const double inv_mid = 1.0 / std::log(1000.0 * midpoint);
      const double inv_hi = 1.0 / std::log(2000.0);
      const double a = 0.45 * level / (inv_mid - inv_hi);
      return {a, 0.95 * level + a * inv_hi};
    }
    case FunctionFamily::kLogPowerRep:
      return {logit(level), std::log(2.0), std::log(0.2)};
  }
  return {};
}

}  // namespace detail

struct CrossingPair {
  std::string first_id;   // higher at low capacity
  std::string second_id;  // higher at high capacity
  double crossing_mflops = 0.0;
};

// Synthetic supernet oracle. Rewards are points on per-topology ground
// truth curves evaluated at the topology's capacity in each supernet,
// plus noise keyed by (topology id, supernet index, seed).
class SimulatorEvaluator : public Evaluator {
 public:
  explicit SimulatorEvaluator(SimulatorConfig config)
      : config_(std::move(config)), supernets_(make_supernets(config_.channel_list)) {
    config_.validate();
    const double g = config_.curve.clean_gap;
    clean_scale_ = 1.0 + g;
    adv_scale_ = (1.0 - (1.0 - config_.lambda) * clean_scale_) / config_.lambda;
  }

  const SimulatorConfig& config() const { return config_; }
  const std::vector<SupernetSpec>& supernets() const override { return supernets_; }

  GroundTruthCurve curve_for(const Topology& t) const {
    auto it = overrides_.find(t.id());
    if (it != overrides_.end()) return it->second;
    const auto& m = config_.curve;
    const auto feats = features(t);
    std::mt19937_64 rng(detail::combine(detail::fnv1a(t.id()), config_.seed ^ 0x5eedc0de5eedc0deULL));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double za = normal(rng);
    const double zb = m.level_midpoint_corr * za +
                      std::sqrt(1.0 - m.level_midpoint_corr * m.level_midpoint_corr) * normal(rng);
    const double zc = normal(rng);
    const std::uint64_t family_draw = rng();
    const double level = std::clamp(
        m.a0 + m.w_conv * feats.conv_fraction + m.w_density * feats.edge_density + m.a_jitter * za,
        0.05, 0.95);
    const double midpoint = std::clamp(
        m.midpoint_gflops * std::exp(m.midpoint_conv * (feats.conv_fraction - 0.5) +
                                     m.midpoint_jitter * zb),
        0.005, 1.5);
    const double steep = std::clamp(m.steepness * std::exp(m.steepness_jitter * zc), 0.3, 4.0);
    FunctionFamily family = FunctionFamily::kLogPower;
    if (config_.family == "mixture") {
      family = kAllFamilies[family_draw % kAllFamilies.size()];
    } else {
      family = *parse_family(config_.family);
    }
    return make_curve(family, detail::family_params_for(family, level, midpoint, steep));
  }

  GroundTruthCurve make_curve(FunctionFamily family, std::vector<double> params) const {
    GroundTruthCurve c;
    c.family = family;
    c.params = std::move(params);
    c.clean_scale = clean_scale_;
    c.adv_scale = adv_scale_;
    return c;
  }

  // Replaces the generated curve of one topology. Setup-phase only.
  void override_curve(const std::string& id, GroundTruthCurve curve) {
    overrides_[id] = std::move(curve);
  }

  double capacity(const Topology& t, int supernet_index) const {
    const auto& spec = supernets_.at(static_cast<std::size_t>(supernet_index - 1));
    return flops_total(t, config_.macro.with_channels(spec.init_channels)).value;
  }

  double ground_truth_at(const Topology& t, double target_mflops) const override {
    return std::clamp(curve_for(t).reward(target_mflops, config_.lambda), 0.0, 1.0);
  }

  // Assigns constructed crossing curves to consecutive pairs of
  // `topologies`: the first member saturates early at a lower asymptote,
  // the second saturates late at a higher one.
  std::vector<CrossingPair> install_crossing_pairs(const std::vector<Topology>& topologies,
                                                   int pairs, double low_mflops = 300.0,
                                                   double high_mflops = 2000.0) {
    std::vector<CrossingPair> out;
    std::mt19937_64 rng(detail::combine(config_.seed, 0xc2055c2055ULL));
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(pairs),
                                                    topologies.size() / 2);
    for (std::size_t p = 0; p < count; ++p) {
      const auto& fast = topologies[2 * p];
      const auto& slow = topologies[2 * p + 1];
      GroundTruthCurve ca, cb;
      while (true) {
        ca = make_curve(FunctionFamily::kLogPower,
                        {0.60 * (1.0 + 0.03 * normal(rng)), std::log(0.10) + 0.1 * normal(rng), -1.5});
        cb = make_curve(FunctionFamily::kLogPower,
                        {0.70 * (1.0 + 0.03 * normal(rng)), std::log(0.40) + 0.1 * normal(rng), -1.5});
        if (ca.value(low_mflops) > cb.value(low_mflops) &&
            cb.value(high_mflops) > ca.value(high_mflops)) {
          break;
        }
      }
      double lo = low_mflops, hi = high_mflops;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (ca.value(mid) > cb.value(mid) ? lo : hi) = mid;
      }
      override_curve(fast.id(), ca);
      override_curve(slow.id(), cb);
      out.push_back({fast.id(), slow.id(), 0.5 * (lo + hi)});
    }
    return out;
  }

  nlohmann::json curve_json(const Topology& t) const {
    const auto c = curve_for(t);
    return {{"topology_id", t.id()},
            {"family", std::string(family_name(c.family))},
            {"params", c.params},
            {"x_scale_mflops", capacity_scale(c.family)},
            {"clean_scale", c.clean_scale},
            {"adv_scale", c.adv_scale}};
  }

 protected:
  OneShotRecord query(const Topology& t, int supernet_index) const override {
    const auto& spec = supernets_.at(static_cast<std::size_t>(supernet_index - 1));
    OneShotRecord rec;
    rec.topology_id = t.id();
    rec.supernet_index = supernet_index;
    rec.init_channels = spec.init_channels;
    rec.mflops = capacity(t, supernet_index);
    double r = curve_for(t).reward(rec.mflops, config_.lambda);
    if (config_.noise_sigma > 0.0) {
      std::mt19937_64 rng(detail::combine(
          detail::fnv1a(t.id()),
          detail::combine(static_cast<std::uint64_t>(supernet_index), config_.seed)));
      std::normal_distribution<double> normal(0.0, config_.noise_sigma);
      r += normal(rng);
    }
    rec.reward = std::isfinite(r) ? std::clamp(r, 0.0, 1.0) : 0.0;
    return rec;
  }

 private:
  SimulatorConfig config_;
  std::vector<SupernetSpec> supernets_;
  std::unordered_map<std::string, GroundTruthCurve> overrides_;
  double clean_scale_ = 1.05;
  double adv_scale_ = 0.95;
};

struct Simulation {
  SimulatorEvaluator simulator;
  TabularEvaluator table;
  std::vector<Topology> topologies;
  std::vector<CrossingPair> crossing_pairs;

  // Ground-truth sidecar. Its schema differs from the reward table on
  // purpose: it can never be loaded as search input.
  nlohmann::json sidecar() const {
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& t : topologies) curves.push_back(simulator.curve_json(t));
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : crossing_pairs) {
      pairs.push_back({{"first_id", p.first_id},
                       {"second_id", p.second_id},
                       {"crossing_mflops", p.crossing_mflops}});
    }
    return {{"kind", "msnas_simulator_ground_truth"},
            {"config", to_json(simulator.config())},
            {"curves", std::move(curves)},
            {"crossing_pairs", std::move(pairs)}};
  }
};

// Builds the simulator for `topologies` and queries every
// (topology, supernet) pair into a reward table.
inline Simulation simulate_population(const SimulatorConfig& config,
                                      const std::vector<Topology>& topologies) {
  Simulation sim{SimulatorEvaluator(config), {}, topologies, {}};
  if (config.crossing_scenario) {
    sim.crossing_pairs = sim.simulator.install_crossing_pairs(topologies, config.crossing_pairs);
  }
  for (const auto& t : topologies) {
    for (const auto& spec : sim.simulator.supernets()) {
      if (sim.table.find(t.id(), spec.index) != nullptr) continue;
      sim.table.add(sim.simulator.one_shot(t, spec.index));
    }
  }
  return sim;
}

}  // namespace msnas
