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

#include "msnas/curvefit.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace msnas {
namespace {

// Direct transcriptions, rearranged algebraically where possible so they
// do not share code paths with the library.
double transcribed(FunctionFamily f, const std::vector<double>& p, double x) {
  const double lx = std::log(x);
  switch (f) {
    case FunctionFamily::kJanoschek:  // a - (a - b) e^{-k x^d}
      return p[0] + (p[1] - p[0]) * std::exp(-p[2] * std::exp(p[3] * lx));
    case FunctionFamily::kVaporPressure:  // exp(a + b/x + c ln x)
      return std::exp(p[0]) * std::exp(p[1] / x) * std::pow(x, p[2]);
    case FunctionFamily::kLogLogLinear:  // ln(a ln x + b)
      return std::log(p[0] * lx + p[1]);
    case FunctionFamily::kIlog2:  // c - a / ln x
      return p[1] - p[0] / lx;
    case FunctionFamily::kLogPower:  // a / (1 + (x / e^b)^c)
      return p[0] / (1.0 + std::exp(p[2] * (lx - p[1])));
    case FunctionFamily::kMmf:  // a - (a - b) / (1 + (d x)^c)
      return p[0] - (p[0] - p[1]) / (1.0 + std::exp(p[2] * (std::log(p[3]) + lx)));
    case FunctionFamily::kLogPowerRep:
      return 1.0 / (1.0 + std::exp(-p[0])) / (1.0 + std::exp(p[2] + std::exp(-p[1]) * lx));
  }
  return NAN;
}

// Parameter boxes whose curves stay inside [0, 1] over typical capacities.
std::vector<std::pair<double, double>> param_box(FunctionFamily f) {
  switch (f) {
    case FunctionFamily::kJanoschek: return {{0.4, 0.9}, {0, 0.3}, {0.5, 20}, {0.5, 2}};
    case FunctionFamily::kVaporPressure: return {{-1.2, -0.1}, {-0.1, -0.005}, {-0.1, 0.3}};
    case FunctionFamily::kLogLogLinear: return {{0.02, 0.3}, {1.1, 2.2}};
    case FunctionFamily::kIlog2: return {{0.2, 5}, {0.4, 1.2}};
    case FunctionFamily::kLogPower: return {{0.3, 0.95}, {std::log(0.03), 0.0}, {-3, -0.5}};
    case FunctionFamily::kMmf: return {{0.4, 0.9}, {0, 0.3}, {0.5, 3}, {1, 30}};
    case FunctionFamily::kLogPowerRep: return {{-1.5, 1.5}, {-1.5, 1.5}, {-1.5, 1.5}};
  }
  return {};
}

std::vector<double> draw_params(FunctionFamily f, std::mt19937_64& rng) {
  std::vector<double> p;
  for (auto [lo, hi] : param_box(f)) p.push_back(std::uniform_real_distribution<double>(lo, hi)(rng));
  return p;
}

TEST(Family, ParamCounts) {
  const std::size_t expected[] = {4, 3, 2, 2, 3, 4, 3};
  for (std::size_t i = 0; i < kAllFamilies.size(); ++i) {
    EXPECT_EQ(param_count(kAllFamilies[i]), expected[i]);
    EXPECT_EQ(parse_family(family_name(kAllFamilies[i])), kAllFamilies[i]);
  }
  EXPECT_FALSE(parse_family("cubic").has_value());
}

TEST(Family, WorkedValues) {
  EXPECT_NEAR(eval_family(FunctionFamily::kLogPower, std::vector<double>{0.8, std::log(1000.0), -1.0}, 1000.0),
              0.4, 1e-15);
  EXPECT_NEAR(eval_family(FunctionFamily::kIlog2, std::vector<double>{1.0, 0.9}, std::exp(1.0)), -0.1, 1e-15);
  EXPECT_EQ(eval_family(FunctionFamily::kVaporPressure, std::vector<double>{0, 0, 0}, 3.7), 1.0);
}

TEST(Family, MatchesTranscription) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> logx(std::log(0.02), std::log(5.0));
  for (FunctionFamily f : kAllFamilies) {
    for (int i = 0; i < 1000; ++i) {
      const auto p = draw_params(f, rng);
      double x = std::exp(logx(rng));
      if (f == FunctionFamily::kIlog2) x *= 1000.0;
      const double want = transcribed(f, p, x);
      if (!std::isfinite(want)) continue;
      const double got = eval_family(f, p, x);
      EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, std::abs(want))) << family_name(f);
    }
  }
}

TEST(Family, DomainErrorsCarryInputs) {
  try {
    eval_family(FunctionFamily::kLogLogLinear, std::vector<double>{1.0, -5.0}, 2.0);
    FAIL();
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("log_log_linear"), std::string::npos);
    EXPECT_NE(msg.find("x=2"), std::string::npos);
  }
  EXPECT_THROW(eval_family(FunctionFamily::kLogPower, std::vector<double>{0.5, 0.0, -1.0}, 0.0), DomainError);
  EXPECT_THROW(eval_family(FunctionFamily::kLogPower, std::vector<double>{0.5, 0.0}, 1.0), ParameterError);
}

std::vector<CurvePoint> points_on(FunctionFamily f, const std::vector<double>& p,
                                  const std::vector<double>& xs_mflops) {
  std::vector<CurvePoint> pts;
  for (double x : xs_mflops) pts.push_back({x, eval_family(f, p, x / capacity_scale(f))});
  return pts;
}

TEST(Fit, RecoversLogPowerExample) {
  // Generator in MFLOPs: a / (1 + (x / 800)^-0.8).
  const std::vector<double> xs{40, 90, 150, 220, 300, 420, 600, 900};
  std::vector<CurvePoint> pts;
  for (double x : xs) pts.push_back({x, 0.7 / (1.0 + std::pow(x / 800.0, -0.8))});
  const auto fr = fit(FunctionFamily::kLogPower, pts);
  ASSERT_TRUE(fr.converged);
  EXPECT_LE(fr.rss, 1e-8);
  for (double x : xs) EXPECT_NEAR(fr.eval(x), 0.7 / (1.0 + std::pow(x / 800.0, -0.8)), 1e-4);
  EXPECT_NEAR(predict_at(fr, 500.0).value, 0.7 / (1.0 + std::pow(500.0 / 800.0, -0.8)), 1e-4);
  // Fitting coordinates are GFLOPs, so b absorbs ln(1000).
  EXPECT_NEAR(fr.params[0], 0.7, 1e-4);
  EXPECT_NEAR(fr.params[1], std::log(0.8), 1e-3);
  EXPECT_NEAR(fr.params[2], -0.8, 1e-3);
}

TEST(Fit, RecoversIlog2Parameters) {
  const std::vector<double> p{0.5, 0.9};
  const auto pts = points_on(FunctionFamily::kIlog2, p, {50, 200, 600, 1500});
  const auto fr = fit(FunctionFamily::kIlog2, pts);
  ASSERT_TRUE(fr.converged);
  EXPECT_NEAR(fr.params[0], 0.5, 1e-4);
  EXPECT_NEAR(fr.params[1], 0.9, 1e-4);
}

TEST(Fit, Underdetermined) {
  const std::vector<CurvePoint> two{{100, 0.3}, {200, 0.4}};
  EXPECT_THROW(fit(FunctionFamily::kLogPower, two), UnderdeterminedError);
  EXPECT_NO_THROW(fit(FunctionFamily::kIlog2, two));
}

TEST(Fit, RejectsInvalidPoints) {
  const std::vector<CurvePoint> bad{{100, 0.3}, {-5, 0.4}, {300, 0.5}};
  EXPECT_THROW(fit(FunctionFamily::kLogPower, bad), ParameterError);
  const std::vector<CurvePoint> high{{100, 0.3}, {200, 1.4}, {300, 0.5}};
  EXPECT_THROW(fit(FunctionFamily::kLogPower, high), ParameterError);
}

TEST(Fit, GenerateThenRecoverAllFamilies) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (FunctionFamily f : kAllFamilies) {
    int converged = 0;
    for (int trial = 0; trial < 20;) {
      const auto p = draw_params(f, rng);
      std::vector<double> xs;
      for (int i = 0; i < 8; ++i) xs.push_back(std::exp(std::log(25.0) + std::log(44.0) * (i + 0.8 * u(rng)) / 8));
      bool inside = true;
      for (double x : xs) {
        const double y = eval_family_raw(f, p, x / capacity_scale(f));
        inside = inside && y >= 0.0 && y <= 1.0;
      }
      if (!inside) continue;
      ++trial;
      const auto fr = fit(f, points_on(f, p, xs));
      if (!fr.converged) continue;
      ++converged;
      const double xh = 25.0 + 1000.0 * u(rng);
      EXPECT_NEAR(fr.eval(xh), eval_family_raw(f, p, xh / capacity_scale(f)), 1e-4) << family_name(f);
    }
    EXPECT_GE(converged, 19) << family_name(f);
  }
}

TEST(Fit, NeverWorseThanAnyStart) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.01);
  const std::vector<double> xs{30, 80, 130, 190, 250, 340, 480, 650};
  for (FunctionFamily f : kAllFamilies) {
    std::vector<CurvePoint> pts;
    for (double x : xs) {
      pts.push_back({x, std::clamp(0.6 / (1.0 + std::pow(x / 200.0, -1.2)) + noise(rng), 0.0, 1.0)});
    }
    const auto fr = fit(f, pts);
    if (!fr.converged) continue;
    for (const auto& start : start_grid(f)) {
      double rss = 0.0;
      bool finite = true;
      for (const auto& pt : pts) {
        const double v = eval_family_raw(f, start, pt.x_mflops / capacity_scale(f));
        finite = finite && std::isfinite(v);
        rss += (v - pt.reward) * (v - pt.reward);
      }
      if (finite) {
        EXPECT_LE(fr.rss, rss + 1e-15) << family_name(f);
      }
    }
  }
}

TEST(Fit, Deterministic) {
  const std::vector<CurvePoint> pts{{30, 0.21}, {80, 0.33}, {150, 0.41}, {300, 0.46}, {700, 0.52}};
  for (FunctionFamily f : kAllFamilies) {
    const auto a = fit(f, pts);
    const auto b = fit(f, pts);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.rss, b.rss);
  }
}

TEST(Fit, StartGridSizes) {
  for (FunctionFamily f : kAllFamilies) {
    std::size_t expected = 1;
    for (std::size_t i = 0; i < param_count(f); ++i) expected *= 3;
    EXPECT_EQ(start_grid(f).size(), expected);
  }
}

// Five-point stencil as a second, independent derivative estimate.
TEST(Jacobian, AgreesWithFivePointStencil) {
  std::mt19937_64 rng(11);
  const std::vector<double> xs{0.05, 0.1, 0.3, 0.6, 1.0};
  for (FunctionFamily f : kAllFamilies) {
    const auto p = draw_params(f, rng);
    std::vector<double> fx = xs;
    if (f == FunctionFamily::kIlog2) {
      for (double& x : fx) x *= 1000.0;
    }
    const auto jac = numeric_jacobian(f, p, fx);
    ASSERT_EQ(jac.size(), fx.size() * p.size());
    for (std::size_t i = 0; i < fx.size(); ++i) {
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double h = 1e-3 * std::max(1.0, std::abs(p[k]));
        auto at = [&](double d) {
          auto q = p;
          q[k] += d;
          return eval_family_raw(f, q, fx[i]);
        };
        const double five = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
        const double got = jac[i * p.size() + k];
        EXPECT_NEAR(got, five, 1e-5 * std::max(1.0, std::abs(five))) << family_name(f) << " k=" << k;
      }
    }
  }
}

TEST(Predict, ClampsAndFlags) {
  FitResult fr;
  fr.family = FunctionFamily::kLogPower;
  fr.params = {1.2, 0.0, -2.0};
  fr.converged = true;
  fr.rss = 0.0;
  const auto p = predict_at(fr, 1e6);  // raw value close to 1.2
  EXPECT_EQ(p.value, 1.0);
  EXPECT_TRUE(p.clamped);
  const auto mid = predict_at(fr, 1000.0);
  EXPECT_NEAR(mid.value, 0.6, 1e-12);
  EXPECT_FALSE(mid.clamped);
}

TEST(Predict, ApproachesAsymptote) {
  FitResult fr;
  fr.family = FunctionFamily::kLogPower;
  fr.params = {0.73, std::log(0.3), -1.1};
  fr.converged = true;
  EXPECT_NEAR(predict_at(fr, 1e9).value, 0.73, 1e-4);
}

TEST(Predict, UnconvergedThrowsAndFallbackInterpolates) {
  FitResult fr;
  fr.family = FunctionFamily::kMmf;
  EXPECT_THROW(predict_at(fr, 100.0), UnconvergedFitError);
  const std::vector<CurvePoint> pts{{100, 0.2}, {200, 0.5}, {300, 0.4}, {400, 0.6}};
  // Running max: 0.2, 0.5, 0.5, 0.6.
  EXPECT_DOUBLE_EQ(predict_or_fallback(fr, pts, 250.0).value, 0.5);
  EXPECT_DOUBLE_EQ(predict_or_fallback(fr, pts, 150.0).value, 0.35);
  EXPECT_DOUBLE_EQ(predict_or_fallback(fr, pts, 50.0).value, 0.2);
  EXPECT_DOUBLE_EQ(predict_or_fallback(fr, pts, 900.0).value, 0.6);
  EXPECT_TRUE(predict_or_fallback(fr, pts, 900.0).fallback);
}

}  // namespace
}  // namespace msnas
