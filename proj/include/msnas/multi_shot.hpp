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

#include <exception>
#include <string>
#include <vector>

#include "msnas/capacity.hpp"
#include "msnas/curvefit.hpp"
#include "msnas/evaluator.hpp"
#include "msnas/search_space.hpp"

namespace msnas {

struct MultiShotEstimate {
  double reward = 0.0;
  bool clamped = false;
  // The fit did not converge; reward comes from monotone interpolation.
  bool fallback = false;
  FitResult fit;
  std::vector<CurvePoint> points;
};

// Queries the topology in all K supernets, fits `family` to the
// (capacity, reward) points and reads the fitted curve at the target.
// Capacities come from the capacity model at each supernet's width.
inline MultiShotEstimate multi_shot_eval(const Topology& t, const Evaluator& evaluator,
                                         FunctionFamily family, double target_mflops,
                                         const MacroConfig& macro_template = {}) {
  MultiShotEstimate est;
  const auto& supernets = evaluator.supernets();
  est.points.reserve(supernets.size());
  for (const auto& spec : supernets) {
    OneShotRecord rec;
    try {
      rec = evaluator.one_shot(t, spec.index);
    } catch (const EvaluatorError&) {
      throw;
    } catch (const std::exception& e) {
      throw EvaluatorError(e.what(), spec.index);
    }
    const double capacity =
        flops_total(t, macro_template.with_channels(spec.init_channels)).value;
    est.points.push_back({capacity, rec.reward});
  }
  est.fit = fit(family, est.points);
  const auto pred = predict_or_fallback(est.fit, est.points, target_mflops);
  est.reward = pred.value;
  est.clamped = pred.clamped;
  est.fallback = pred.fallback;
  return est;
}

}  // namespace msnas
