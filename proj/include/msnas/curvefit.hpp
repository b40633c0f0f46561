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
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "msnas/error.hpp"

namespace msnas {

// Saturating extrapolation families for reward-vs-capacity curves.
enum class FunctionFamily : std::uint8_t {
  kJanoschek,      // a - (a - b) exp(-c x^d)
  kVaporPressure,  // exp(a + b / x + c log x)
  kLogLogLinear,   // log(a log x + b)
  kIlog2,          // c - a / log x, params (a, c)
  kLogPower,       // a / (1 + (x / e^b)^c)
  kMmf,            // a - (a - b) / (1 + (d x)^c)
  kLogPowerRep,    // 1 / ((1 + e^-a)(1 + e^c x^(e^-b)))
};

inline constexpr std::array<FunctionFamily, 7> kAllFamilies = {
    FunctionFamily::kJanoschek, FunctionFamily::kVaporPressure, FunctionFamily::kLogLogLinear,
    FunctionFamily::kIlog2,     FunctionFamily::kLogPower,      FunctionFamily::kMmf,
    FunctionFamily::kLogPowerRep};

constexpr std::size_t param_count(FunctionFamily f) {
  switch (f) {
    case FunctionFamily::kJanoschek:
    case FunctionFamily::kMmf:
      return 4;
    case FunctionFamily::kVaporPressure:
    case FunctionFamily::kLogPower:
    case FunctionFamily::kLogPowerRep:
      return 3;
    case FunctionFamily::kLogLogLinear:
    case FunctionFamily::kIlog2:
      return 2;
  }
  return 0;
}

constexpr std::string_view family_name(FunctionFamily f) {
  switch (f) {
    case FunctionFamily::kJanoschek:
      return "janoschek";
    case FunctionFamily::kVaporPressure:
      return "vapor_pressure";
    case FunctionFamily::kLogLogLinear:
      return "log_log_linear";
    case FunctionFamily::kIlog2:
      return "ilog2";
    case FunctionFamily::kLogPower:
      return "log_power";
    case FunctionFamily::kMmf:
      return "mmf";
    case FunctionFamily::kLogPowerRep:
      return "log_power_rep";
  }
  return "";
}

inline std::optional<FunctionFamily> parse_family(std::string_view name) {
  for (auto f : kAllFamilies) {
    if (family_name(f) == name) return f;
  }
  return std::nullopt;
}

constexpr std::size_t family_order(FunctionFamily f) { return static_cast<std::size_t>(f); }

// Raw formula; may return NaN or inf outside the family's domain.
inline double eval_family_raw(FunctionFamily f, std::span<const double> p, double x) {
  using std::exp;
  using std::log;
  using std::pow;
  switch (f) {
    case FunctionFamily::kJanoschek:
      return p[0] - (p[0] - p[1]) * exp(-p[2] * pow(x, p[3]));
    case FunctionFamily::kVaporPressure:
      return exp(p[0] + p[1] / x + p[2] * log(x));
    case FunctionFamily::kLogLogLinear:
      return log(p[0] * log(x) + p[1]);
    case FunctionFamily::kIlog2:
      return p[1] - p[0] / log(x);
    case FunctionFamily::kLogPower:
      return p[0] / (1.0 + pow(x / exp(p[1]), p[2]));
    case FunctionFamily::kMmf:
      return p[0] - (p[0] - p[1]) / (1.0 + pow(p[3] * x, p[2]));
    case FunctionFamily::kLogPowerRep:
      return 1.0 / ((1.0 + exp(-p[0])) * (1.0 + exp(p[2]) * pow(x, exp(-p[1]))));
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline double eval_family(FunctionFamily f, std::span<const double> params, double x) {
  auto describe = [&] {
    std::ostringstream os;
    os.precision(17);
    os << family_name(f) << "(x=" << x << "; params=[";
    for (std::size_t i = 0; i < params.size(); ++i) os << (i ? ", " : "") << params[i];
    os << "])";
    return os.str();
  };
  if (params.size() != param_count(f)) {
    throw ParameterError(std::string(family_name(f)) + " expects " +
                         std::to_string(param_count(f)) + " params, got " +
                         std::to_string(params.size()));
  }
  if (!(x > 0.0)) throw DomainError("non-positive x in " + describe());
  const double v = eval_family_raw(f, params, x);
  if (!std::isfinite(v)) throw DomainError("non-finite value of " + describe());
  return v;
}

// MFLOPs per fitting unit. Capacities are expressed in GFLOPs before
// fitting; ilog2 stays in MFLOPs because 1/log(x) has a pole at x = 1,
// which GFLOPs would place inside the data range.
constexpr double capacity_scale(FunctionFamily f) {
  return f == FunctionFamily::kIlog2 ? 1.0 : 1000.0;
}

struct CurvePoint {
  double x_mflops = 0.0;
  double reward = 0.0;
};

struct FitResult {
  FunctionFamily family = FunctionFamily::kLogPower;
  std::vector<double> params;
  double rss = std::numeric_limits<double>::infinity();
  bool converged = false;
  int n_points = 0;
  double x_scale = 1000.0;

  double eval(double x_mflops) const {
    return eval_family_raw(family, params, x_mflops / x_scale);
  }
};

struct FitOptions {
  int max_iterations = 200;
  double initial_damping = 1e-3;
  double damping_factor = 10.0;
  double relative_tolerance = 1e-10;
  // Residual assigned to a point whose model value is not finite.
  double penalty_residual = 1e6;
  // Once a start reaches this rss the remaining starts are skipped.
  double exact_rss = 1e-26;
};

// Deterministic multi-start grid (fitting coordinates): the Cartesian
// product of a 3-value set per parameter.
inline std::vector<std::vector<double>> start_grid(FunctionFamily f) {
  std::vector<std::vector<double>> axes;
  switch (f) {
    case FunctionFamily::kJanoschek:
      axes = {{0.3, 0.6, 0.9}, {0.0, 0.2, 0.4}, {0.5, 2.0, 8.0}, {0.5, 1.0, 2.0}};
      break;
    case FunctionFamily::kVaporPressure:
      axes = {{-1.5, -0.75, 0.0}, {-0.1, -0.01, 0.01}, {-0.2, 0.1, 0.4}};
      break;
    case FunctionFamily::kLogLogLinear:
      axes = {{0.02, 0.1, 0.3}, {1.2, 1.6, 2.2}};
      break;
    case FunctionFamily::kIlog2:
      axes = {{0.5, 2.0, 5.0}, {0.3, 0.6, 0.9}};
      break;
    case FunctionFamily::kLogPower:
      axes = {{0.3, 0.6, 0.9}, {-3.0, -1.5, 0.0}, {-2.0, -1.0, -0.5}};
      break;
    case FunctionFamily::kMmf:
      axes = {{0.3, 0.6, 0.9}, {0.0, 0.1, 0.3}, {0.5, 1.0, 2.0}, {1.0, 5.0, 20.0}};
      break;
    case FunctionFamily::kLogPowerRep:
      axes = {{-1.0, 0.0, 1.0}, {-1.0, 0.0, 1.0}, {-1.0, 0.0, 1.0}};
      break;
  }
  std::vector<std::vector<double>> grid{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<double>> next;
    next.reserve(grid.size() * axis.size());
    for (const auto& prefix : grid) {
      for (double v : axis) {
        auto p = prefix;
        p.push_back(v);
        next.push_back(std::move(p));
      }
    }
    grid = std::move(next);
  }
  return grid;
}

namespace detail {

inline constexpr std::size_t kMaxParams = 4;
using ParamVec = std::array<double, kMaxParams>;

struct Problem {
  FunctionFamily family;
  std::size_t p;
  std::vector<double> xs;  // fitting coordinates
  std::vector<double> ys;
  double penalty;

  // Fills r with residuals; returns rss and whether every value was finite.
  double residuals(const ParamVec& params, std::vector<double>& r, bool& clean) const {
    clean = true;
    double rss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double v = eval_family_raw(family, std::span<const double>(params.data(), p), xs[i]);
      double ri = v - ys[i];
      if (!std::isfinite(ri)) {
        ri = penalty;
        clean = false;
      }
      r[i] = ri;
      rss += ri * ri;
    }
    return rss;
  }
};

inline double fd_step(double value) { return 1e-6 * std::max(1.0, std::abs(value)); }

// Central-difference Jacobian, n x p row-major. Falls back to a
// one-sided difference when one side is not finite, and to 0 when both are.
inline void central_jacobian(FunctionFamily f, std::span<const double> params,
                             std::span<const double> xs, std::vector<double>& jac) {
  const std::size_t p = params.size();
  jac.assign(xs.size() * p, 0.0);
  ParamVec work{};
  std::copy(params.begin(), params.end(), work.begin());
  const std::span<const double> view(work.data(), p);
  for (std::size_t j = 0; j < p; ++j) {
    const double h = fd_step(params[j]);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      work[j] = params[j] + h;
      const double up = eval_family_raw(f, view, xs[i]);
      work[j] = params[j] - h;
      const double down = eval_family_raw(f, view, xs[i]);
      work[j] = params[j];
      double d = 0.0;
      if (std::isfinite(up) && std::isfinite(down)) {
        d = (up - down) / (2.0 * h);
      } else {
        const double mid = eval_family_raw(f, view, xs[i]);
        if (std::isfinite(up) && std::isfinite(mid)) {
          d = (up - mid) / h;
        } else if (std::isfinite(down) && std::isfinite(mid)) {
          d = (mid - down) / h;
        }
      }
      jac[i * p + j] = std::isfinite(d) ? d : 0.0;
    }
  }
}

// Solves the p x p system in place by Gaussian elimination with partial
// pivoting. Returns false when singular.
inline bool solve_small(std::array<double, kMaxParams * kMaxParams>& a, ParamVec& b,
                        std::size_t p) {
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < p; ++r) {
      if (std::abs(a[r * p + col]) > std::abs(a[pivot * p + col])) pivot = r;
    }
    if (!(std::abs(a[pivot * p + col]) > 1e-300)) return false;
    if (pivot != col) {
      for (std::size_t k = 0; k < p; ++k) std::swap(a[col * p + k], a[pivot * p + k]);
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < p; ++r) {
      const double factor = a[r * p + col] / a[col * p + col];
      for (std::size_t k = col; k < p; ++k) a[r * p + k] -= factor * a[col * p + k];
      b[r] -= factor * b[col];
    }
  }
  for (std::size_t col = p; col-- > 0;) {
    double s = b[col];
    for (std::size_t k = col + 1; k < p; ++k) s -= a[col * p + k] * b[k];
    b[col] = s / a[col * p + col];
  }
  for (std::size_t k = 0; k < p; ++k) {
    if (!std::isfinite(b[k])) return false;
  }
  return true;
}

struct LocalFit {
  ParamVec params{};
  double rss = std::numeric_limits<double>::infinity();
  bool clean = false;
};

// Damped Gauss-Newton from one start. Damping scales the Gauss-Newton
// diagonal; each trial step (accepted or not) counts as an iteration.
inline LocalFit damped_gauss_newton(const Problem& prob, const ParamVec& start,
                                    const FitOptions& opt) {
  const std::size_t n = prob.xs.size();
  const std::size_t p = prob.p;
  std::vector<double> r(n), r_trial(n), jac;
  LocalFit cur;
  cur.params = start;
  cur.rss = prob.residuals(cur.params, r, cur.clean);
  double lambda = opt.initial_damping;
  int iterations = 0;
  bool need_jacobian = true;
  std::array<double, kMaxParams * kMaxParams> jtj{};
  ParamVec grad{};
  while (iterations < opt.max_iterations && cur.rss > 0.0) {
    if (need_jacobian) {
      central_jacobian(prob.family, std::span<const double>(cur.params.data(), p), prob.xs, jac);
      jtj.fill(0.0);
      grad.fill(0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < p; ++a) {
          grad[a] += jac[i * p + a] * r[i];
          for (std::size_t b = 0; b < p; ++b) jtj[a * p + b] += jac[i * p + a] * jac[i * p + b];
        }
      }
      need_jacobian = false;
    }
    ++iterations;
    auto system = jtj;
    ParamVec step{};
    for (std::size_t a = 0; a < p; ++a) {
      system[a * p + a] += lambda * std::max(jtj[a * p + a], 1e-12);
      step[a] = -grad[a];
    }
    if (!solve_small(system, step, p)) {
      lambda *= opt.damping_factor;
      if (lambda > 1e16) break;
      continue;
    }
    LocalFit trial;
    for (std::size_t a = 0; a < p; ++a) trial.params[a] = cur.params[a] + step[a];
    trial.rss = prob.residuals(trial.params, r_trial, trial.clean);
    if (std::isfinite(trial.rss) && trial.rss < cur.rss) {
      const double rel = (cur.rss - trial.rss) / cur.rss;
      cur = trial;
      r.swap(r_trial);
      lambda = std::max(lambda / opt.damping_factor, 1e-15);
      need_jacobian = true;
      if (rel < opt.relative_tolerance) break;
    } else {
      lambda *= opt.damping_factor;
      if (lambda > 1e16) break;
    }
  }
  return cur;
}

inline void validate_points(std::span<const CurvePoint> points) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& pt = points[i];
    if (!(pt.x_mflops > 0.0) || !std::isfinite(pt.x_mflops)) {
      throw ParameterError("point " + std::to_string(i) + ": capacity must be positive");
    }
    if (!(pt.reward >= 0.0 && pt.reward <= 1.0)) {
      throw ParameterError("point " + std::to_string(i) + ": reward outside [0, 1]");
    }
  }
}

}  // namespace detail

// Least-squares fit of `family` to the points from every start of the
// family's grid; keeps the lowest-rss local minimum. converged is false
// when no start ends with finite parameters and finite residuals.
inline FitResult fit(FunctionFamily family, std::span<const CurvePoint> points,
                     const FitOptions& opt = {}) {
  const std::size_t p = param_count(family);
  if (points.size() < p) {
    throw UnderdeterminedError(std::string(family_name(family)) + " needs at least " +
                               std::to_string(p) + " points, got " +
                               std::to_string(points.size()));
  }
  detail::validate_points(points);
  detail::Problem prob{family, p, {}, {}, opt.penalty_residual};
  const double scale = capacity_scale(family);
  for (const auto& pt : points) {
    prob.xs.push_back(pt.x_mflops / scale);
    prob.ys.push_back(pt.reward);
  }
  FitResult result;
  result.family = family;
  result.n_points = static_cast<int>(points.size());
  result.x_scale = scale;
  detail::LocalFit best;
  bool have_best = false;
  for (const auto& start : start_grid(family)) {
    detail::ParamVec s{};
    std::copy(start.begin(), start.end(), s.begin());
    auto local = detail::damped_gauss_newton(prob, s, opt);
    bool finite = std::isfinite(local.rss);
    for (std::size_t k = 0; k < p; ++k) finite = finite && std::isfinite(local.params[k]);
    if (!finite) continue;
    // Clean fits always beat fits that still carry penalty residuals.
    const bool better = !have_best || (local.clean && !best.clean) ||
                        (local.clean == best.clean && local.rss < best.rss);
    if (better) {
      best = local;
      have_best = true;
    }
    if (best.clean && best.rss <= opt.exact_rss) break;
  }
  if (have_best) {
    result.params.assign(best.params.begin(), best.params.begin() + static_cast<long>(p));
    result.rss = best.rss;
    result.converged = best.clean;
  }
  return result;
}

inline FitResult fit(FunctionFamily family, const std::vector<CurvePoint>& points,
                     const FitOptions& opt = {}) {
  return fit(family, std::span<const CurvePoint>(points), opt);
}

// Jacobian the fitter uses, exposed for verification. xs are in fitting
// coordinates. Row-major n x p.
inline std::vector<double> numeric_jacobian(FunctionFamily family, std::span<const double> params,
                                            std::span<const double> xs) {
  std::vector<double> jac;
  detail::central_jacobian(family, params, xs, jac);
  return jac;
}

struct Prediction {
  double value = 0.0;
  bool clamped = false;
  bool fallback = false;
};

inline Prediction predict_at(const FitResult& fr, double target_mflops) {
  if (!fr.converged) {
    throw UnconvergedFitError(std::string(family_name(fr.family)) +
                              " fit did not converge; use the interpolation fallback");
  }
  const double raw = fr.eval(target_mflops);
  if (!std::isfinite(raw)) {
    throw DomainError(std::string(family_name(fr.family)) + " prediction is not finite");
  }
  Prediction out;
  out.value = std::clamp(raw, 0.0, 1.0);
  out.clamped = out.value != raw;
  return out;
}

// Fallback for unconverged fits: piecewise-linear through the running
// maximum of the points sorted by capacity, constant outside the range.
inline Prediction monotone_interpolate(std::span<const CurvePoint> points, double target_mflops) {
  if (points.empty()) throw ParameterError("monotone_interpolate: no points");
  std::vector<CurvePoint> sorted(points.begin(), points.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const CurvePoint& a, const CurvePoint& b) { return a.x_mflops < b.x_mflops; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    sorted[i].reward = std::max(sorted[i].reward, sorted[i - 1].reward);
  }
  Prediction out;
  out.fallback = true;
  if (target_mflops <= sorted.front().x_mflops) {
    out.value = sorted.front().reward;
  } else if (target_mflops >= sorted.back().x_mflops) {
    out.value = sorted.back().reward;
  } else {
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      if (target_mflops <= sorted[i].x_mflops) {
        const auto& a = sorted[i - 1];
        const auto& b = sorted[i];
        const double span_x = b.x_mflops - a.x_mflops;
        const double t = span_x > 0.0 ? (target_mflops - a.x_mflops) / span_x : 1.0;
        out.value = a.reward + t * (b.reward - a.reward);
        break;
      }
    }
  }
  return out;
}

// Fitted prediction when the fit converged, interpolation otherwise.
inline Prediction predict_or_fallback(const FitResult& fr, std::span<const CurvePoint> points,
                                      double target_mflops) {
  if (fr.converged) {
    const double raw = fr.eval(target_mflops);
    if (std::isfinite(raw)) {
      Prediction out;
      out.value = std::clamp(raw, 0.0, 1.0);
      out.clamped = out.value != raw;
      return out;
    }
  }
  return monotone_interpolate(points, target_mflops);
}

}  // namespace msnas
