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
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "msnas/capacity.hpp"
#include "msnas/curvefit.hpp"
#include "msnas/error.hpp"
#include "msnas/evaluator.hpp"
#include "msnas/hash.hpp"
#include "msnas/io.hpp"
#include "msnas/multi_shot.hpp"
#include "msnas/search_space.hpp"
#include "msnas/surrogate.hpp"

namespace msnas {

// Reward oracle handed to a controller. `queries` reports the cumulative
// number of one-shot queries behind the rewards returned so far.
struct Objective {
  std::function<double(const Topology&)> reward;
  std::function<std::int64_t()> queries = [] { return std::int64_t{0}; };
};

// Multi-shot reward at `target_mflops` on `evaluator`.
inline Objective multi_shot_objective(const Evaluator& evaluator, FunctionFamily family,
                                      double target_mflops, MacroConfig macro = {}) {
  Objective obj;
  obj.reward = [&evaluator, family, target_mflops, macro](const Topology& t) {
    return multi_shot_eval(t, evaluator, family, target_mflops, macro).reward;
  };
  obj.queries = [&evaluator] { return evaluator.query_count(); };
  return obj;
}

struct EvoConfig {
  int steps = 200;
  int population = 100;
  int tournament = 10;
  int initial_samples = 200;
  Layout layout = Layout::kCellWise;
  int max_consecutive_failures = 3;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (population <= 0) throw ConfigError("population must be positive");
    if (tournament <= 0 || tournament > population) {
      throw ConfigError("tournament must lie in [1, population]");
    }
    if (initial_samples < population) {
      throw ConfigError("initial_samples must be >= population");
    }
    if (max_consecutive_failures <= 0) throw ConfigError("max_consecutive_failures must be positive");
  }
};

struct HistoryEntry {
  // 0 for bootstrap samples; evo steps count from 1; predictor picks use
  // the stage number.
  int step = 0;
  std::string topology_id;
  double est_reward = 0.0;
  std::int64_t queries = 0;
  std::string parent_id;
};

struct FailureRecord {
  int step = 0;
  std::string topology_id;
  std::string message;
};

struct SearchHistory {
  std::vector<HistoryEntry> entries;
  std::vector<double> best_so_far;
  std::vector<FailureRecord> failures;
  // Predictor search only: surrogate queries spent in each stage.
  std::vector<std::int64_t> surrogate_queries;
  // Evolution only: population size after each step.
  std::vector<std::size_t> population_sizes;

  std::size_t evaluations() const { return entries.size(); }

  void record(HistoryEntry e) {
    const double prev = best_so_far.empty() ? -std::numeric_limits<double>::infinity()
                                            : best_so_far.back();
    best_so_far.push_back(std::max(prev, e.est_reward));
    entries.push_back(std::move(e));
  }

  std::string to_csv() const {
    std::ostringstream out;
    out << "step,topology_id,est_reward,cumulative_one_shot_queries\n";
    for (const auto& e : entries) {
      out << e.step << ',' << e.topology_id << ',' << io::format_double(e.est_reward) << ','
          << e.queries << '\n';
    }
    return out.str();
  }
};

struct SearchResult {
  Topology best;
  double best_reward = 0.0;
  SearchHistory history;
};

namespace detail {

struct Member {
  Topology topology;
  double reward = 0.0;
  std::int64_t birth = 0;
};

// Evaluates through `obj`, recording success or failure. Returns nullopt
// on failure and throws SearchAbortedError once `limit` failures in a row
// have occurred.
inline std::optional<double> evaluate_recorded(const Objective& obj, const Topology& t, int step,
                                               const std::string& parent, SearchHistory& h,
                                               int& consecutive, int limit) {
  try {
    const double r = obj.reward(t);
    consecutive = 0;
    h.record({step, t.id(), r, obj.queries(), parent});
    return r;
  } catch (const std::exception& e) {
    h.failures.push_back({step, t.id(), e.what()});
    if (++consecutive >= limit) {
      throw SearchAbortedError("search aborted after " + std::to_string(consecutive) +
                               " consecutive reward failures; last: " + e.what());
    }
    return std::nullopt;
  }
}

// Draws k distinct indices of [0, n) by partial Fisher-Yates.
template <typename Rng>
std::vector<std::size_t> draw_distinct(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

// Best of the drawn members; ties go to the older member.
inline std::size_t tournament_winner(const std::vector<Member>& pop,
                                     const std::vector<std::size_t>& drawn) {
  std::size_t best = drawn.front();
  for (std::size_t i : drawn) {
    const auto& m = pop[i];
    const auto& b = pop[best];
    if (m.reward > b.reward || (m.reward == b.reward && m.birth < b.birth)) best = i;
  }
  return best;
}

// Worst member; ties remove the older one.
inline std::size_t worst_member(const std::vector<Member>& pop) {
  std::size_t worst = 0;
  for (std::size_t i = 1; i < pop.size(); ++i) {
    const auto& m = pop[i];
    const auto& w = pop[worst];
    if (m.reward < w.reward || (m.reward == w.reward && m.birth < w.birth)) worst = i;
  }
  return worst;
}

// Top `keep` members by reward, stable in evaluation order.
inline std::vector<Member> top_members(std::vector<Member> all, std::size_t keep) {
  std::stable_sort(all.begin(), all.end(),
                   [](const Member& a, const Member& b) { return a.reward > b.reward; });
  if (all.size() > keep) all.erase(all.begin() + static_cast<std::ptrdiff_t>(keep), all.end());
  return all;
}

inline void update_best(const Member& m, std::optional<Member>& best) {
  if (!best || m.reward > best->reward) best = m;
}

}  // namespace detail

// Tournament evolution. Bootstraps from config.initial_samples random
// topologies (keeping the top config.population), then for each step
// draws config.tournament distinct members, mutates the best one, inserts
// the evaluated child and removes the population's worst member.
inline SearchResult evo_search(const EvoConfig& config, const Objective& objective) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  SearchHistory history;
  int consecutive = 0;
  std::int64_t birth = 0;
  std::optional<detail::Member> best;

  std::vector<detail::Member> pool;
  for (int i = 0; i < config.initial_samples; ++i) {
    Topology t = sample_random(rng, config.layout);
    const auto r = detail::evaluate_recorded(objective, t, 0, "", history, consecutive,
                                             config.max_consecutive_failures);
    if (!r) continue;
    pool.push_back({std::move(t), *r, birth++});
    detail::update_best(pool.back(), best);
  }
  if (pool.size() < static_cast<std::size_t>(config.population)) {
    throw SearchAbortedError("only " + std::to_string(pool.size()) +
                             " initial samples evaluated; population needs " +
                             std::to_string(config.population));
  }
  auto population = detail::top_members(std::move(pool), static_cast<std::size_t>(config.population));

  for (int step = 1; step <= config.steps; ++step) {
    const auto drawn = detail::draw_distinct(population.size(),
                                             static_cast<std::size_t>(config.tournament), rng);
    const auto& parent = population[detail::tournament_winner(population, drawn)];
    Topology child = mutate(parent.topology, rng);
    const auto r = detail::evaluate_recorded(objective, child, step, parent.topology.id(), history,
                                             consecutive, config.max_consecutive_failures);
    if (!r) {
      history.population_sizes.push_back(population.size());
      continue;
    }
    population.push_back({std::move(child), *r, birth++});
    detail::update_best(population.back(), best);
    population.erase(population.begin() +
                     static_cast<std::ptrdiff_t>(detail::worst_member(population)));
    history.population_sizes.push_back(population.size());
  }
  return {best->topology, best->reward, std::move(history)};
}

// Predictor-based search over stage-wise topologies. After bootstrapping
// and training the surrogate, each stage runs an inner tournament
// evolution (oldest member removed) scored by the surrogate and earmarks the population's best
// unseen topology every inner_steps / picks_per_stage surrogate queries.
// Scoring the inner population's seed members counts toward the query
// budget. The picks are evaluated with the objective and the surrogate is
// tuned on everything evaluated so far.
inline SearchResult predictor_search(const PredictorConfig& config, const Objective& objective,
                                     int max_consecutive_failures = 3) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::mt19937_64 train_rng(detail::mix64(config.seed ^ 0x7261696eULL));
  SearchHistory history;
  int consecutive = 0;
  std::optional<detail::Member> best;
  std::vector<detail::Member> evaluated;
  std::unordered_set<std::string> seen;
  std::vector<LabeledTopology> labeled;

  auto absorb = [&](Topology t, double r) {
    seen.insert(t.id());
    labeled.push_back({t, r});
    evaluated.push_back({std::move(t), r, static_cast<std::int64_t>(evaluated.size())});
    detail::update_best(evaluated.back(), best);
  };

  for (int i = 0; i < config.initial_samples; ++i) {
    Topology t = sample_random(rng, Layout::kStageWise);
    const auto r = detail::evaluate_recorded(objective, t, 0, "", history, consecutive,
                                             max_consecutive_failures);
    if (r) absorb(std::move(t), *r);
  }
  if (labeled.size() < 2) throw SearchAbortedError("fewer than 2 bootstrap topologies evaluated");

  SurrogateModel model(config, detail::mix64(config.seed ^ 0x696e6974ULL));
  surrogate_train(model, labeled, config.epochs, train_rng);

  const std::int64_t budget = config.inner_steps;
  const std::int64_t pick_every = config.inner_steps / config.picks_per_stage;
  const std::int64_t cap = budget * config.step_cap_factor;
  for (int stage = 1; stage <= config.stages; ++stage) {
    std::vector<detail::Member> pop;
    std::int64_t birth = 0;
    for (const auto& m : detail::top_members(evaluated, static_cast<std::size_t>(config.inner_population))) {
      pop.push_back({m.topology, model.score(m.topology), birth++});
    }
    std::int64_t queries = static_cast<std::int64_t>(pop.size());
    std::vector<Topology> picks;
    std::unordered_set<std::string> picked;
    auto earmark = [&] {
      std::optional<std::size_t> choice;
      for (std::size_t i = 0; i < pop.size(); ++i) {
        const auto& id = pop[i].topology.id();
        if (seen.count(id) || picked.count(id)) continue;
        if (!choice || pop[i].reward > pop[*choice].reward ||
            (pop[i].reward == pop[*choice].reward && pop[i].birth < pop[*choice].birth)) {
          choice = i;
        }
      }
      if (choice) {
        picked.insert(pop[*choice].topology.id());
        picks.push_back(pop[*choice].topology);
      }
    };
    const auto tournament = static_cast<std::size_t>(std::min<int>(config.inner_tournament,
                                                                   static_cast<int>(pop.size())));
    while (static_cast<int>(picks.size()) < config.picks_per_stage && queries < cap) {
      const auto drawn = detail::draw_distinct(pop.size(), tournament, rng);
      Topology child = mutate(pop[detail::tournament_winner(pop, drawn)].topology, rng);
      const double s = model.score(child);
      ++queries;
      pop.push_back({std::move(child), s, birth++});
      // Aging removal keeps the inner population moving once its best
      // members have been picked.
      if (static_cast<int>(pop.size()) > config.inner_population) pop.erase(pop.begin());
      if (queries % pick_every == 0) earmark();
    }
    history.surrogate_queries.push_back(queries);

    for (auto& t : picks) {
      const auto r = detail::evaluate_recorded(objective, t, stage, "", history, consecutive,
                                               max_consecutive_failures);
      if (r) absorb(std::move(t), *r);
    }
    if (!config.warm_start) {
      model = SurrogateModel(config, detail::mix64(config.seed ^ 0x696e6974ULL ^ static_cast<std::uint64_t>(stage)));
    }
    model.reset_optimizer();
    surrogate_train(model, labeled, config.warm_start ? config.tune_epochs : config.epochs, train_rng);
  }
  return {best->topology, best->reward, std::move(history)};
}

inline nlohmann::json to_json(const EvoConfig& c) {
  return {{"steps", c.steps},
          {"population", c.population},
          {"tournament", c.tournament},
          {"initial_samples", c.initial_samples},
          {"layout", std::string(layout_name(c.layout))},
          {"max_consecutive_failures", c.max_consecutive_failures},
          {"seed", c.seed}};
}

inline nlohmann::json to_json(const PredictorConfig& c) {
  return {{"initial_samples", c.initial_samples}, {"stages", c.stages},
          {"picks_per_stage", c.picks_per_stage}, {"inner_steps", c.inner_steps},
          {"inner_population", c.inner_population}, {"inner_tournament", c.inner_tournament},
          {"step_cap_factor", c.step_cap_factor},  {"op_dim", c.op_dim},
          {"node_dim", c.node_dim},               {"hidden_dim", c.hidden_dim},
          {"cell_out_dim", c.cell_out_dim},       {"message_rounds", c.message_rounds},
          {"mlp_layers", c.mlp_layers},           {"mlp_hidden", c.mlp_hidden},
          {"dropout", c.dropout},                 {"margin", c.margin},
          {"epochs", c.epochs},                   {"tune_epochs", c.tune_epochs},
          {"warm_start", c.warm_start},           {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},     {"seed", c.seed}};
}

}  // namespace msnas
