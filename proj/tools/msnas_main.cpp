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

// msnas command-line driver. Every subcommand takes an optional flat JSON
// config (--config); explicit flags override it, and the merged settings
// are echoed to <out>/config.json. Outputs are deterministic per config;
// timestamps and wall times go only to <out>/run.log.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msnas/controllers.hpp"
#include "msnas/hash.hpp"
#include "msnas/multi_shot.hpp"
#include "msnas/parallel.hpp"
#include "msnas/selection.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace msnas {
namespace {

// Binds CLI options to config keys. After parsing, resolve() merges the
// config file under the flags and returns the effective settings.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON config file with flat keys");
    app_->add_option("--out", out_dir_, "Output directory")->required();
  }

  template <typename T>
  CLI::Option* option(const std::string& flag, const std::string& key, T& var,
                      const std::string& desc) {
    auto* opt = app_->add_option(flag, var, desc);
    add_key(key, opt, var);
    return opt;
  }

  CLI::Option* flag(const std::string& flag, const std::string& key, bool& var,
                    const std::string& desc) {
    auto* opt = app_->add_flag(flag, var, desc);
    add_key(key, opt, var);
    return opt;
  }

  // Marks a key that must come from the flags or the config file.
  void require(const std::string& key) { required_.insert(key); }

  json resolve() {
    json file = json::object();
    if (!config_path_.empty()) {
      try {
        file = json::parse(io::read_file(config_path_));
      } catch (const json::exception& e) {
        throw ConfigError("config '" + config_path_ + "': " + e.what());
      }
      if (!file.is_object()) throw ConfigError("config '" + config_path_ + "' must be an object");
      for (const auto& [key, _] : file.items()) {
        if (!resolvers_.count(key)) {
          throw ConfigError("config '" + config_path_ + "': unknown key '" + key + "'");
        }
      }
    }
    json eff = json::object();
    for (auto& [key, fn] : resolvers_) {
      try {
        fn(file, eff);
      } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      }
    }
    for (const auto& key : required_) {
      if (!eff.contains(key)) {
        throw ConfigError("'" + key + "' is required (flag --" + key + " or config key)");
      }
    }
    fs::create_directories(out_dir_);
    io::write_file(out("config.json"), eff.dump(2) + "\n");
    return eff;
  }

  std::string out(const std::string& name) const { return (fs::path(out_dir_) / name).string(); }

 private:
  template <typename T>
  void add_key(const std::string& key, CLI::Option* opt, T& var) {
    resolvers_[key] = [this, key, opt, &var](const json& file, json& eff) {
      if (opt->count() > 0) {
        eff[key] = var;
      } else if (file.contains(key)) {
        var = file.at(key).get<T>();
        eff[key] = var;
      } else if (!required_.count(key)) {
        eff[key] = var;
      }
    };
  }

  CLI::App* app_;
  std::string config_path_;
  std::string out_dir_;
  std::map<std::string, std::function<void(const json&, json&)>> resolvers_;
  std::set<std::string> required_;
};

Layout layout_arg(const std::string& name) {
  auto l = parse_layout(name);
  if (!l) throw ConfigError("unknown layout '" + name + "' (cell_wise | stage_wise)");
  return *l;
}

FunctionFamily family_arg(const std::string& name) {
  auto f = parse_family(name);
  if (!f) throw ConfigError("unknown family '" + name + "'");
  return *f;
}

void require_file(const std::string& path, const std::string& what, const std::string& hint) {
  if (path.empty() || !fs::exists(path)) {
    throw ConfigError(what + " '" + path + "' not found; " + hint);
  }
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

// Appends a timestamped line to <out>/run.log; never read back.
void log_line(const Settings& s, const std::string& text) {
  std::string prev;
  if (fs::exists(s.out("run.log"))) prev = io::read_file(s.out("run.log"));
  io::write_file(s.out("run.log"), prev + timestamp() + " " + text + "\n");
}

std::vector<CurvePoint> read_points(const std::string& path) {
  const auto lines = io::lines_of(io::read_file(path));
  if (lines.empty() || lines[0] != "x_mflops,reward") {
    throw ParseError("expected header 'x_mflops,reward'", 1);
  }
  std::vector<CurvePoint> pts;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = io::split_csv_line(lines[i]);
    CurvePoint p;
    if (f.size() != 2 || !io::parse_number(f[0], p.x_mflops) || !io::parse_number(f[1], p.reward)) {
      throw ParseError("expected two numeric fields", i + 1);
    }
    pts.push_back(p);
  }
  return pts;
}

json fit_json(const FitResult& fr) {
  return {{"family", std::string(family_name(fr.family))},
          {"params", fr.params},
          {"rss", fr.rss},
          {"converged", fr.converged},
          {"n_points", fr.n_points},
          {"x_scale_mflops", fr.x_scale}};
}

TabularEvaluator load_reward_table(const std::string& path) {
  require_file(path, "reward table", "generate one with `msnas simulate` or pass --table");
  return load_table(path);
}

// ---------------------------------------------------------------------------
// Subcommands. Each registers its options and returns the action to run.

struct Command {
  CLI::App* app;
  std::shared_ptr<Settings> settings;
  std::function<void()> run;
};

Command add_sample(CLI::App& root) {
  auto* app = root.add_subcommand("sample", "Sample random topologies");
  auto s = std::make_shared<Settings>(app);
  auto n = std::make_shared<int>(200);
  auto layout = std::make_shared<std::string>("cell_wise");
  auto seed = std::make_shared<std::uint64_t>(0);
  s->option("--n", "n", *n, "Number of topologies");
  s->option("--layout", "layout", *layout, "cell_wise | stage_wise");
  s->option("--seed", "seed", *seed, "RNG seed");
  return {app, s, [=] {
    s->resolve();
    if (*n < 0) throw ConfigError("n must be >= 0");
    const auto l = layout_arg(*layout);
    fs::create_directories(s->out("topologies"));
    std::mt19937_64 rng(*seed);
    std::string index = "index,topology_id,path\n";
    for (int i = 0; i < *n; ++i) {
      const auto t = sample_random(rng, l);
      const std::string rel = "topologies/" + t.id() + ".json";
      io::write_file(s->out(rel), to_json(t).dump(2) + "\n");
      index += std::to_string(i) + "," + t.id() + "," + rel + "\n";
    }
    io::write_file(s->out("index.csv"), index);
  }};
}

Command add_flops(CLI::App& root) {
  auto* app = root.add_subcommand("flops", "Capacity table for topology files");
  auto s = std::make_shared<Settings>(app);
  auto files = std::make_shared<std::vector<std::string>>();
  auto channels = std::make_shared<std::vector<int>>(default_channel_list());
  app->add_option("files", *files, "Topology JSON files")->required();
  s->option("--channels", "channel_list", *channels, "Init channel counts");
  return {app, s, [=] {
    s->resolve();
    for (int c : *channels) {
      if (c < 1) throw ConfigError("channel counts must be positive");
    }
    std::string csv = "topology_id,init_channels,mflops\n";
    int bad = 0;
    for (const auto& path : *files) {
      try {
        const auto t = topology_from_json(json::parse(io::read_file(path)));
        for (int c : *channels) {
          csv += t.id() + "," + std::to_string(c) + "," +
                 io::format_double(flops_total(t, MacroConfig{}.with_channels(c)).value) + "\n";
        }
      } catch (const std::exception& e) {
        std::cerr << "msnas flops: " << path << ": " << e.what() << "\n";
        ++bad;
      }
    }
    io::write_file(s->out("flops.csv"), csv);
    if (bad > 0) throw Error(std::to_string(bad) + " topology file(s) could not be read");
  }};
}

Command add_fit(CLI::App& root) {
  auto* app = root.add_subcommand("fit", "Fit a curve family to (x_mflops, reward) points");
  auto s = std::make_shared<Settings>(app);
  auto input = std::make_shared<std::string>();
  auto family = std::make_shared<std::string>("log_power");
  auto target = std::make_shared<double>(0.0);
  s->option("--input", "input", *input, "CSV with header x_mflops,reward");
  s->option("--family", "family", *family, "Curve family");
  s->option("--target", "target_mflops", *target, "Also predict at this capacity if > 0");
  s->require("input");
  return {app, s, [=] {
    s->resolve();
    require_file(*input, "points file", "pass --input <csv>");
    const auto pts = read_points(*input);
    const auto fr = fit(family_arg(*family), pts);
    auto doc = fit_json(fr);
    if (*target > 0.0) {
      const auto p = predict_or_fallback(fr, pts, *target);
      doc["prediction"] = {{"target_mflops", *target},
                           {"value", p.value},
                           {"clamped", p.clamped},
                           {"fallback", p.fallback}};
    }
    io::write_file(s->out("fit.json"), doc.dump(2) + "\n");
  }};
}

Command add_select(CLI::App& root) {
  auto* app = root.add_subcommand("select-family", "Leave-one-out curve family selection");
  auto s = std::make_shared<Settings>(app);
  auto table = std::make_shared<std::string>();
  auto include_first = std::make_shared<bool>(false);
  s->option("--table", "table", *table, "Reward table CSV");
  s->flag("--include-first", "include_first", *include_first,
          "Count the smallest supernet in the averages");
  s->require("table");
  return {app, s, [=] {
    s->resolve();
    const auto m = RewardMatrix::from_table(load_reward_table(*table));
    SelectionOptions opt;
    opt.exclude_first = !*include_first;
    const auto rep = select_family(m, opt);
    io::write_file(s->out("selection.json"), rep.to_json().dump(2) + "\n");
    io::write_file(s->out("selection.csv"), rep.to_csv());
  }};
}

Command add_simulate(CLI::App& root) {
  auto* app = root.add_subcommand("simulate", "Generate a reward table from the simulator");
  auto s = std::make_shared<Settings>(app);
  auto cfg = std::make_shared<SimulatorConfig>();
  auto n = std::make_shared<int>(200);
  auto layout = std::make_shared<std::string>("cell_wise");
  s->option("--seed", "seed", cfg->seed, "Simulator and sampling seed");
  s->option("--n", "n", *n, "Number of topologies");
  s->option("--layout", "layout", *layout, "cell_wise | stage_wise");
  s->option("--noise-sigma", "noise_sigma", cfg->noise_sigma, "Per-query reward noise std");
  s->option("--lambda", "lambda", cfg->lambda, "Clean/adversarial accuracy weight");
  s->option("--channels", "channel_list", cfg->channel_list, "Supernet init channels");
  s->option("--family", "family", cfg->family, "Generating family or 'mixture'");
  s->flag("--crossing", "crossing_scenario", cfg->crossing_scenario, "Install crossing pairs");
  s->option("--crossing-pairs", "crossing_pairs", cfg->crossing_pairs, "Crossing pair count");
  s->require("seed");
  return {app, s, [=] {
    s->resolve();
    if (*n < 0) throw ConfigError("n must be >= 0");
    cfg->validate();
    std::mt19937_64 rng(detail::combine(cfg->seed, 0x73616d70ULL));
    std::vector<Topology> tops;
    for (int i = 0; i < *n; ++i) tops.push_back(sample_random(rng, layout_arg(*layout)));
    const auto sim = simulate_population(*cfg, tops);
    sim.table.dump(s->out("table.csv"));
    json docs = json::array();
    for (const auto& t : tops) docs.push_back(to_json(t));
    io::write_file(s->out("topologies.json"), docs.dump() + "\n");
    io::write_file(s->out("ground_truth.json"), sim.sidecar().dump(2) + "\n");
  }};
}

Command add_search(CLI::App& root) {
  auto* app = root.add_subcommand("search", "Architecture search at a target capacity");
  auto s = std::make_shared<Settings>(app);
  struct Opts {
    std::string controller = "evo";
    std::uint64_t seed = 0;
    double target = 2000.0;
    std::string selection;
    std::string family;
    std::string backend = "simulator";
    std::string table;
    SimulatorConfig sim;
    EvoConfig evo;
    PredictorConfig pred;
    std::string layout = "cell_wise";
    int initial_samples = 200;
  };
  auto o = std::make_shared<Opts>();
  s->option("--controller", "controller", o->controller, "evo | predictor");
  s->option("--seed", "seed", o->seed, "Search seed (also the simulator seed)");
  s->option("--target", "target_mflops", o->target, "Targeted capacity in MFLOPs");
  s->option("--selection", "selection", o->selection, "selection.json from select-family");
  s->option("--family", "family", o->family, "Curve family; overrides --selection");
  s->option("--backend", "backend", o->backend, "simulator | table");
  s->option("--table", "table", o->table, "Reward table CSV for the table backend");
  s->option("--noise-sigma", "noise_sigma", o->sim.noise_sigma, "Simulator reward noise std");
  s->option("--lambda", "lambda", o->sim.lambda, "Simulator accuracy weight");
  s->option("--channels", "channel_list", o->sim.channel_list, "Simulator supernet channels");
  s->option("--sim-family", "simulator_family", o->sim.family, "Simulator generating family");
  s->option("--initial-samples", "initial_samples", o->initial_samples, "Random initial evaluations");
  s->option("--steps", "steps", o->evo.steps, "Evolution steps");
  s->option("--population", "population", o->evo.population, "Evolution population size");
  s->option("--tournament", "tournament", o->evo.tournament, "Evolution tournament size");
  s->option("--layout", "layout", o->layout, "Evolution layout");
  s->option("--stages", "stages", o->pred.stages, "Predictor stages");
  s->option("--picks", "picks_per_stage", o->pred.picks_per_stage, "Predictor picks per stage");
  s->option("--inner-steps", "inner_steps", o->pred.inner_steps, "Surrogate queries per stage");
  s->option("--epochs", "epochs", o->pred.epochs, "Surrogate training epochs");
  s->option("--tune-epochs", "tune_epochs", o->pred.tune_epochs, "Surrogate tuning epochs");
  s->require("seed");
  return {app, s, [=] {
    const auto eff = s->resolve();
    if (o->controller != "evo" && o->controller != "predictor") {
      throw ConfigError("unknown controller '" + o->controller + "' (evo | predictor)");
    }
    FunctionFamily family;
    if (!o->family.empty()) {
      family = family_arg(o->family);
    } else {
      require_file(o->selection, "selection report",
                   "run `msnas select-family --table <reward table> --out <dir>` first and pass "
                   "--selection <dir>/selection.json, or name a family with --family");
      const auto rep = json::parse(io::read_file(o->selection));
      if (!rep.contains("selected")) {
        throw SchemaError("selection report '" + o->selection + "' has no 'selected' field");
      }
      family = family_arg(rep.at("selected").get<std::string>());
    }
    std::unique_ptr<Evaluator> backend;
    if (o->backend == "simulator") {
      o->sim.seed = o->seed;
      o->sim.validate();
      backend = std::make_unique<SimulatorEvaluator>(o->sim);
    } else if (o->backend == "table") {
      backend = std::make_unique<TabularEvaluator>(load_reward_table(o->table));
    } else {
      throw ConfigError("unknown backend '" + o->backend + "' (simulator | table)");
    }
    const auto obj = multi_shot_objective(*backend, family, o->target);
    const auto t0 = std::chrono::steady_clock::now();
    SearchResult res = [&] {
      if (o->controller == "evo") {
        o->evo.seed = o->seed;
        o->evo.initial_samples = o->initial_samples;
        o->evo.layout = layout_arg(o->layout);
        return evo_search(o->evo, obj);
      }
      o->pred.seed = o->seed;
      o->pred.initial_samples = o->initial_samples;
      return predictor_search(o->pred, obj);
    }();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    io::write_file(s->out("history.csv"), res.history.to_csv());
    io::write_file(s->out("best_topology.json"), to_json(res.best).dump(2) + "\n");
    json summary = {{"controller", o->controller},
                    {"seed", o->seed},
                    {"target_mflops", o->target},
                    {"family", std::string(family_name(family))},
                    {"best_topology", to_json(res.best)},
                    {"best_topology_id", res.best.id()},
                    {"est_reward", res.best_reward},
                    {"evaluations", res.history.evaluations()},
                    {"one_shot_queries", backend->query_count()},
                    {"failures", res.history.failures.size()},
                    {"config", eff},
                    {"wall_time_log", "run.log"}};
    if (!res.history.surrogate_queries.empty()) {
      summary["surrogate_queries"] = res.history.surrogate_queries;
    }
    summary["summary_hash"] = detail::to_hex(detail::fnv1a(summary.dump()));
    io::write_file(s->out("summary.json"), summary.dump(2) + "\n");
    log_line(*s, "search evaluations=" + std::to_string(res.history.evaluations()) +
                     " search_wall_time_s=" + io::format_double(secs));
  }};
}

Command add_stats(CLI::App& root) {
  auto* app = root.add_subcommand("stats", "Rank agreement between supernets of a reward table");
  auto s = std::make_shared<Settings>(app);
  auto table = std::make_shared<std::string>();
  auto k = std::make_shared<int>(10);
  s->option("--table", "table", *table, "Reward table CSV");
  s->option("--k", "k", *k, "Top-K size for precision at K");
  s->require("table");
  return {app, s, [=] {
    s->resolve();
    const auto m = RewardMatrix::from_table(load_reward_table(*table));
    if (*k < 1) throw ConfigError("k must be >= 1");
    auto column = [&](std::size_t j) {
      std::vector<double> v(m.n());
      for (std::size_t t = 0; t < m.n(); ++t) v[t] = m.reward(t, j);
      return v;
    };
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(*k), m.n());
    std::string csv = "supernet_a,supernet_b,spearman,kendall,precision_at_k\n";
    for (std::size_t a = 0; a < m.k(); ++a) {
      for (std::size_t b = a + 1; b < m.k(); ++b) {
        const auto ra = column(a), rb = column(b);
        csv += std::to_string(m.supernets[a].index) + "," + std::to_string(m.supernets[b].index) +
               "," + io::format_double(spearman(ra, rb).value) + "," +
               io::format_double(kendall_tau(ra, rb).value) + "," +
               io::format_double(precision_at_k(ra, rb, kk).value) + "\n";
      }
    }
    io::write_file(s->out("stats.csv"), csv);
  }};
}

}  // namespace
}  // namespace msnas

int main(int argc, char** argv) {
  CLI::App app{"Multi-shot architecture search toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // accept --threads after the subcommand too
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap; 0 uses all cores")
      ->check(CLI::NonNegativeNumber);
  const std::vector<msnas::Command> commands = {
      msnas::add_sample(app),   msnas::add_flops(app),    msnas::add_fit(app),
      msnas::add_select(app),   msnas::add_simulate(app), msnas::add_search(app),
      msnas::add_stats(app)};
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  msnas::thread_cap() = static_cast<std::size_t>(threads);
  for (const auto& cmd : commands) {
    if (!cmd.app->parsed()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cmd.run();
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      msnas::log_line(*cmd.settings, cmd.app->get_name() + " wall_time_s=" +
                                         msnas::io::format_double(secs));
    } catch (const std::exception& e) {
      std::cerr << "msnas " << cmd.app->get_name() << ": error: " << e.what() << "\n";
      return 1;
    }
  }
  return 0;
}
