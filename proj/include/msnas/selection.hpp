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
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msnas/curvefit.hpp"
#include "msnas/error.hpp"
#include "msnas/evaluator.hpp"
#include "msnas/io.hpp"
#include "msnas/parallel.hpp"
#include "msnas/rank_stats.hpp"

namespace msnas {

// Complete N x K grid of one-shot (capacity, reward) pairs, row per topology.
struct RewardMatrix {
  std::vector<std::string> topology_ids;
  std::vector<SupernetSpec> supernets;
  std::vector<double> mflops;   // N * K, row-major
  std::vector<double> rewards;  // N * K, row-major

  std::size_t n() const { return topology_ids.size(); }
  std::size_t k() const { return supernets.size(); }
  double capacity(std::size_t t, std::size_t j) const { return mflops[t * k() + j]; }
  double reward(std::size_t t, std::size_t j) const { return rewards[t * k() + j]; }

  // Topologies in order of first appearance in the table.
  static RewardMatrix from_table(const TabularEvaluator& table) {
    RewardMatrix m;
    m.supernets = table.supernets();
    std::vector<std::string> order;
    {
      std::map<std::string, bool> seen;
      for (const auto& r : table.records()) {
        if (seen.emplace(r.topology_id, true).second) order.push_back(r.topology_id);
      }
    }
    std::vector<std::string> missing;
    for (const auto& id : order) {
      for (const auto& s : m.supernets) {
        const auto* rec = table.find(id, s.index);
        if (rec == nullptr) {
          missing.push_back("(" + id + ", " + std::to_string(s.index) + ")");
          continue;
        }
        m.mflops.push_back(rec->mflops);
        m.rewards.push_back(rec->reward);
      }
    }
    if (!missing.empty()) {
      std::string msg = "reward table incomplete; " + std::to_string(missing.size()) +
                        " missing (topology, supernet) keys:";
      for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
      if (missing.size() > 20) msg += " ...";
      throw CompletenessError(msg);
    }
    m.topology_ids = std::move(order);
    return m;
  }
};

struct LooCorrelation {
  double tau = std::numeric_limits<double>::quiet_NaN();
  int fits = 0;
  int fallbacks = 0;
  // Every prediction was identical, so no ranking information exists;
  // tau is reported as 0.
  bool degenerate_predictions = false;
  std::vector<double> predictions;
};

// Leave-supernet-j-out correlation for one family (j is 1-based): every
// topology is fitted on its other K-1 points and predicted at its own
// capacity in supernet j; tau is Spearman against the actual rewards.
inline LooCorrelation loo_correlation(FunctionFamily family, const RewardMatrix& m,
                                      std::size_t leave_out, const FitOptions& opt = {}) {
  const std::size_t k = m.k();
  if (k < param_count(family) + 2) {
    throw ParameterError(std::string(family_name(family)) + " needs K >= " +
                         std::to_string(param_count(family) + 2) + " supernets, got " +
                         std::to_string(k));
  }
  if (leave_out < 1 || leave_out > k) throw ParameterError("leave-out index out of range");
  const std::size_t j = leave_out - 1;
  LooCorrelation out;
  out.predictions.assign(m.n(), 0.0);
  std::vector<char> fell_back(m.n(), 0);
  parallel_for(m.n(), [&](std::size_t t) {
    std::vector<CurvePoint> pts;
    pts.reserve(k - 1);
    for (std::size_t s = 0; s < k; ++s) {
      if (s != j) pts.push_back({m.capacity(t, s), m.reward(t, s)});
    }
    const auto fr = fit(family, pts, opt);
    const auto pred = predict_or_fallback(fr, pts, m.capacity(t, j));
    out.predictions[t] = pred.value;
    fell_back[t] = pred.fallback ? 1 : 0;
  });
  out.fits = static_cast<int>(m.n());
  for (char f : fell_back) out.fallbacks += f;
  std::vector<double> actual(m.n());
  for (std::size_t t = 0; t < m.n(); ++t) actual[t] = m.reward(t, j);
  if (detail::constant(actual)) {
    throw DegenerateInputError("rewards in supernet " + std::to_string(leave_out) +
                               " have zero rank variance");
  }
  if (detail::constant(out.predictions)) {
    out.degenerate_predictions = true;
    out.tau = 0.0;
  } else {
    out.tau = spearman(out.predictions, actual).value;
  }
  return out;
}

struct SelectionOptions {
  // Drop tau_1 (smallest supernet) from the family averages.
  bool exclude_first = true;
  // Averages closer than this are ties, resolved by parameter count and
  // then family order.
  double tie_tolerance = 1e-12;
  FitOptions fit;
};

struct LooReport {
  std::vector<FunctionFamily> families;
  std::size_t k = 0;
  bool exclude_first = true;
  // tau[i][j]: family i, supernet j (0-based). NaN when the family has
  // too many parameters for K.
  std::vector<std::vector<double>> tau;
  std::vector<std::vector<int>> fallbacks;
  std::vector<std::vector<bool>> degenerate;
  std::vector<double> average;
  FunctionFamily selected = FunctionFamily::kLogPower;

  nlohmann::json to_json() const {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
    nlohmann::json fams = nlohmann::json::array();
    for (std::size_t i = 0; i < families.size(); ++i) {
      nlohmann::json taus = nlohmann::json::array();
      for (double v : tau[i]) taus.push_back(num(v));
      fams.push_back({{"family", std::string(family_name(families[i]))},
                      {"param_count", param_count(families[i])},
                      {"tau", taus},
                      {"average_tau", num(average[i])},
                      {"fallbacks", fallbacks[i]},
                      {"degenerate", degenerate[i]}});
    }
    return {{"k", k},
            {"exclude_first", exclude_first},
            {"families", fams},
            {"selected", std::string(family_name(selected))}};
  }

  // One row per family, one column per left-out supernet.
  std::string to_csv() const {
    std::string out = "family";
    for (std::size_t j = 1; j <= k; ++j) out += ",tau_" + std::to_string(j);
    out += ",average\n";
    for (std::size_t i = 0; i < families.size(); ++i) {
      out += std::string(family_name(families[i]));
      for (double v : tau[i]) out += "," + (std::isfinite(v) ? io::format_double(v) : "");
      out += "," + (std::isfinite(average[i]) ? io::format_double(average[i]) : "") + "\n";
    }
    return out;
  }
};

// Leave-one-out family selection: argmax of the average tau over the
// counted supernets.
inline LooReport select_family(const RewardMatrix& m, const SelectionOptions& opt = {},
                               const std::vector<FunctionFamily>& candidates =
                                   std::vector<FunctionFamily>(kAllFamilies.begin(),
                                                               kAllFamilies.end())) {
  if (m.k() < 3) throw ParameterError("select_family needs K >= 3 supernets");
  if (m.n() < 2) throw ParameterError("select_family needs at least 2 topologies");
  LooReport rep;
  rep.families = candidates;
  rep.k = m.k();
  rep.exclude_first = opt.exclude_first;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto fam : candidates) {
    std::vector<double> taus(m.k(), nan);
    std::vector<int> fb(m.k(), 0);
    std::vector<bool> deg(m.k(), false);
    if (m.k() >= param_count(fam) + 2) {
      for (std::size_t j = 1; j <= m.k(); ++j) {
        const auto loo = loo_correlation(fam, m, j, opt.fit);
        taus[j - 1] = loo.tau;
        fb[j - 1] = loo.fallbacks;
        deg[j - 1] = loo.degenerate_predictions;
      }
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = opt.exclude_first ? 1 : 0; j < m.k(); ++j) {
      sum += taus[j];
      ++count;
    }
    rep.tau.push_back(std::move(taus));
    rep.fallbacks.push_back(std::move(fb));
    rep.degenerate.push_back(std::move(deg));
    rep.average.push_back(count > 0 ? sum / static_cast<double>(count) : nan);
  }
  std::size_t best = rep.families.size();
  for (std::size_t i = 0; i < rep.families.size(); ++i) {
    if (!std::isfinite(rep.average[i])) continue;
    if (best == rep.families.size()) {
      best = i;
      continue;
    }
    const double diff = rep.average[i] - rep.average[best];
    if (diff > opt.tie_tolerance) {
      best = i;
    } else if (std::abs(diff) <= opt.tie_tolerance) {
      const auto pi = param_count(rep.families[i]);
      const auto pb = param_count(rep.families[best]);
      if (pi < pb || (pi == pb && family_order(rep.families[i]) < family_order(rep.families[best]))) {
        best = i;
      }
    }
  }
  if (best == rep.families.size()) {
    throw ParameterError("no candidate family has enough supernets for leave-one-out");
  }
  rep.selected = rep.families[best];
  return rep;
}

}  // namespace msnas
