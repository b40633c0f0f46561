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
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "msnas/error.hpp"
#include "msnas/search_space.hpp"

namespace msnas {

// Hyperparameters of the predictor-based controller and its surrogate.
struct PredictorConfig {
  // Outer loop.
  int initial_samples = 200;
  int stages = 8;
  int picks_per_stage = 50;
  // Surrogate queries per stage, including scoring the initial inner
  // population; one pick is earmarked every inner_steps / picks_per_stage.
  int inner_steps = 2500;
  int inner_population = 20;
  int inner_tournament = 5;
  // Inner search stops after this multiple of inner_steps even when
  // fewer than picks_per_stage distinct picks were found.
  int step_cap_factor = 10;

  // Encoder.
  int op_dim = 48;
  int node_dim = 48;
  int hidden_dim = 48;
  int cell_out_dim = 32;
  int message_rounds = 2;
  // Scoring head: mlp_layers linear layers, mlp_hidden units each.
  int mlp_layers = 3;
  int mlp_hidden = 256;
  double dropout = 0.1;

  // Training.
  double margin = 0.1;
  int epochs = 100;
  int tune_epochs = 50;
  bool warm_start = true;
  int batch_size = 50;
  double learning_rate = 1e-3;

  std::uint64_t seed = 0;

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(initial_samples, "initial_samples");
    positive(stages, "stages");
    positive(picks_per_stage, "picks_per_stage");
    positive(inner_steps, "inner_steps");
    positive(inner_population, "inner_population");
    positive(inner_tournament, "inner_tournament");
    positive(step_cap_factor, "step_cap_factor");
    positive(op_dim, "op_dim");
    positive(node_dim, "node_dim");
    positive(hidden_dim, "hidden_dim");
    positive(cell_out_dim, "cell_out_dim");
    positive(message_rounds, "message_rounds");
    positive(mlp_layers, "mlp_layers");
    positive(mlp_hidden, "mlp_hidden");
    positive(epochs, "epochs");
    positive(batch_size, "batch_size");
    if (op_dim != node_dim || hidden_dim != node_dim) {
      throw ConfigError("op_dim, node_dim and hidden_dim must be equal (gated message passing)");
    }
    if (inner_tournament > inner_population) {
      throw ConfigError("inner_tournament must not exceed inner_population");
    }
    if (inner_steps % picks_per_stage != 0) {
      throw ConfigError("inner_steps must be a multiple of picks_per_stage");
    }
    if (inner_population > inner_steps) {
      throw ConfigError("inner_population must not exceed inner_steps");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
  }
};

struct LabeledTopology {
  Topology topology;
  double reward = 0.0;
};

// Graph encoder + MLP scorer over stage-wise topologies.
//
// Per cell: node states start from a learned per-node embedding. Each
// message round sets every internal node to
//   tanh(W_t * sum_{u -> v, op != none} (op_emb[op] * h_u) + b_t)
// (elementwise gating by the op embedding); input nodes keep their state.
// The cell embedding is W_out * sum of internal node states + b_out. The
// encoder is shared by all four cells; the four embeddings are
// concatenated (S0, S1, S2, R), passed through dropout and scored by the
// MLP (ReLU between layers).
//
// All parameters live in one flat vector; gradients are derived by hand.
class SurrogateModel {
 public:
  explicit SurrogateModel(const PredictorConfig& config, std::uint64_t init_seed = 0)
      : cfg_(config) {
    cfg_.validate();
    build_layout();
    params_.assign(total_, 0.0);
    adam_m_.assign(total_, 0.0);
    adam_v_.assign(total_, 0.0);
    initialize(init_seed);
  }

  static std::size_t parameter_count(const PredictorConfig& c) {
    SurrogateModel probe_layout_only(c, LayoutOnly{});
    return probe_layout_only.total_;
  }

  const PredictorConfig& config() const { return cfg_; }
  std::size_t size() const { return total_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // Inference-mode score (dropout off).
  double score(const Topology& t) const {
    check_layout(t);
    Cache cache;
    return forward(t, nullptr, cache);
  }

  // Mean pairwise hinge loss over a batch and its gradient. A pair (i, j)
  // with reward_i < reward_j contributes max(0, margin - (s_j - s_i));
  // equal rewards form no pair. `masks` (one per item, length
  // 4 * cell_out_dim, already scaled) enables dropout; null disables it.
  double loss_and_gradient(std::span<const LabeledTopology> batch, std::vector<double>& grad,
                           const std::vector<std::vector<double>>* masks = nullptr) const {
    grad.assign(total_, 0.0);
    const std::size_t n = batch.size();
    std::vector<Cache> caches(n);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
      check_layout(batch[i].topology);
      scores[i] = forward(batch[i].topology, masks ? &(*masks)[i] : nullptr, caches[i]);
    }
    std::vector<double> dscore(n, 0.0);
    double loss = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!(batch[i].reward < batch[j].reward)) continue;
        ++pairs;
        const double h = cfg_.margin - (scores[j] - scores[i]);
        if (std::isnan(h)) return h;  // h > 0 would silently drop it
        if (h > 0.0) {
          loss += h;
          dscore[j] -= 1.0;
          dscore[i] += 1.0;
        }
      }
    }
    if (pairs == 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(pairs);
    for (std::size_t i = 0; i < n; ++i) {
      if (dscore[i] != 0.0) backward(batch[i].topology, caches[i], dscore[i] * inv, grad);
    }
    return loss * inv;
  }

  // Number of strict pairs a batch yields.
  static std::size_t pair_count(std::span<const LabeledTopology> batch) {
    std::size_t pairs = 0;
    for (const auto& a : batch) {
      for (const auto& b : batch) pairs += a.reward < b.reward ? 1 : 0;
    }
    return pairs;
  }

  // Scaled inverted-dropout mask for one item.
  template <typename Rng>
  std::vector<double> draw_mask(Rng& rng) const {
    std::vector<double> mask(static_cast<std::size_t>(4 * cfg_.cell_out_dim), 1.0);
    if (cfg_.dropout <= 0.0) return mask;
    std::bernoulli_distribution drop(cfg_.dropout);
    const double keep_scale = 1.0 / (1.0 - cfg_.dropout);
    for (auto& m : mask) m = drop(rng) ? 0.0 : keep_scale;
    return mask;
  }

  // One Adam step with the configured step size.
  void adam_step(const std::vector<double>& grad, double learning_rate) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++adam_t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_t_));
    for (std::size_t k = 0; k < total_; ++k) {
      adam_m_[k] = kBeta1 * adam_m_[k] + (1.0 - kBeta1) * grad[k];
      adam_v_[k] = kBeta2 * adam_v_[k] + (1.0 - kBeta2) * grad[k] * grad[k];
      params_[k] -= learning_rate * (adam_m_[k] / c1) / (std::sqrt(adam_v_[k] / c2) + kEps);
    }
  }

  void reset_optimizer() {
    std::fill(adam_m_.begin(), adam_m_.end(), 0.0);
    std::fill(adam_v_.begin(), adam_v_.end(), 0.0);
    adam_t_ = 0;
  }

 private:
  struct LayoutOnly {};
  SurrogateModel(const PredictorConfig& config, LayoutOnly) : cfg_(config) {
    cfg_.validate();
    build_layout();
  }

  struct Cache {
    // Per cell: node states per round ((rounds + 1) x 6 x D), gated
    // message sums per round (rounds x 4 x D), pooled state (D).
    std::vector<std::vector<double>> h;
    std::vector<std::vector<double>> msg;
    std::vector<std::vector<double>> pooled;
    std::vector<double> concat;  // after dropout
    std::vector<double> mask;
    // MLP activations: input and post-activation output of each layer.
    std::vector<std::vector<double>> act;
  };

  std::size_t d() const { return static_cast<std::size_t>(cfg_.node_dim); }
  std::size_t z() const { return static_cast<std::size_t>(cfg_.cell_out_dim); }
  std::size_t rounds() const { return static_cast<std::size_t>(cfg_.message_rounds); }

  void build_layout() {
    std::size_t off = 0;
    auto take = [&](std::size_t n) {
      const std::size_t at = off;
      off += n;
      return at;
    };
    node_emb_ = take(kNumNodes * d());
    op_emb_ = take(3 * d());
    round_w_.clear();
    round_b_.clear();
    for (std::size_t t = 0; t < rounds(); ++t) {
      round_w_.push_back(take(d() * d()));
      round_b_.push_back(take(d()));
    }
    out_w_ = take(z() * d());
    out_b_ = take(z());
    mlp_dims_.clear();
    mlp_dims_.push_back(4 * z());
    for (int l = 0; l + 1 < cfg_.mlp_layers; ++l) mlp_dims_.push_back(static_cast<std::size_t>(cfg_.mlp_hidden));
    mlp_dims_.push_back(1);
    mlp_w_.clear();
    mlp_b_.clear();
    for (std::size_t l = 0; l + 1 < mlp_dims_.size(); ++l) {
      mlp_w_.push_back(take(mlp_dims_[l + 1] * mlp_dims_[l]));
      mlp_b_.push_back(take(mlp_dims_[l + 1]));
    }
    total_ = off;
  }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](std::size_t at, std::size_t n, double scale) {
      for (std::size_t k = 0; k < n; ++k) params_[at + k] = scale * normal(rng);
    };
    fill(node_emb_, kNumNodes * d(), 0.5);
    fill(op_emb_, 3 * d(), 0.5);
    for (std::size_t t = 0; t < rounds(); ++t) fill(round_w_[t], d() * d(), 1.0 / std::sqrt(static_cast<double>(d())));
    fill(out_w_, z() * d(), 1.0 / std::sqrt(static_cast<double>(d())));
    for (std::size_t l = 0; l < mlp_w_.size(); ++l) {
      fill(mlp_w_[l], mlp_dims_[l + 1] * mlp_dims_[l], std::sqrt(2.0 / static_cast<double>(mlp_dims_[l])));
    }
  }

  static void check_layout(const Topology& t) {
    if (t.layout() != msnas::Layout::kStageWise) {
      throw UnsupportedError("surrogate scores stage-wise topologies only");
    }
  }

  // Index into the op embedding table, or -1 for kNone.
  static int op_slot(OpKind op) { return op == OpKind::kNone ? -1 : static_cast<int>(op) - 1; }

  double forward(const Topology& t, const std::vector<double>* mask, Cache& cache) const {
    const std::size_t D = d(), Z = z(), T = rounds();
    const auto edges = admissible_edges();
    const double* p = params_.data();
    cache.h.assign(4, std::vector<double>((T + 1) * kNumNodes * D, 0.0));
    cache.msg.assign(4, std::vector<double>(T * 4 * D, 0.0));
    cache.pooled.assign(4, std::vector<double>(D, 0.0));
    cache.concat.assign(4 * Z, 0.0);
    for (std::size_t c = 0; c < 4; ++c) {
      const CellTopology& cell = t.cell(c);
      auto& h = cache.h[c];
      auto& msg = cache.msg[c];
      std::copy(p + node_emb_, p + node_emb_ + kNumNodes * D, h.begin());
      for (std::size_t r = 0; r < T; ++r) {
        const double* hin = h.data() + r * kNumNodes * D;
        double* hout = h.data() + (r + 1) * kNumNodes * D;
        std::copy(hin, hin + kNumInputNodes * D, hout);
        for (std::size_t k = 0; k < edges.size(); ++k) {
          const int slot = op_slot(cell.op(k));
          if (slot < 0) continue;
          const double* e = p + op_emb_ + static_cast<std::size_t>(slot) * D;
          const double* src = hin + static_cast<std::size_t>(edges[k].from) * D;
          double* m = msg.data() + (r * 4 + static_cast<std::size_t>(edges[k].to - kNumInputNodes)) * D;
          for (std::size_t q = 0; q < D; ++q) m[q] += e[q] * src[q];
        }
        const double* w = p + round_w_[r];
        const double* b = p + round_b_[r];
        for (std::size_t v = 0; v < 4; ++v) {
          const double* m = msg.data() + (r * 4 + v) * D;
          double* out = hout + (v + kNumInputNodes) * D;
          for (std::size_t row = 0; row < D; ++row) {
            double s = b[row];
            const double* wr = w + row * D;
            for (std::size_t q = 0; q < D; ++q) s += wr[q] * m[q];
            out[row] = std::tanh(s);
          }
        }
      }
      auto& pooled = cache.pooled[c];
      const double* hfin = h.data() + T * kNumNodes * D;
      for (std::size_t v = kNumInputNodes; v < kNumNodes; ++v) {
        for (std::size_t q = 0; q < D; ++q) pooled[q] += hfin[v * D + q];
      }
      const double* w = p + out_w_;
      for (std::size_t row = 0; row < Z; ++row) {
        double s = p[out_b_ + row];
        for (std::size_t q = 0; q < D; ++q) s += w[row * D + q] * pooled[q];
        cache.concat[c * Z + row] = s;
      }
    }
    if (mask != nullptr) {
      cache.mask = *mask;
      for (std::size_t k = 0; k < cache.concat.size(); ++k) cache.concat[k] *= cache.mask[k];
    } else {
      cache.mask.clear();
    }
    cache.act.assign(1, cache.concat);
    for (std::size_t l = 0; l < mlp_w_.size(); ++l) {
      const auto& in = cache.act.back();
      std::vector<double> out(mlp_dims_[l + 1]);
      const double* w = p + mlp_w_[l];
      const double* b = p + mlp_b_[l];
      const bool last = l + 1 == mlp_w_.size();
      for (std::size_t row = 0; row < out.size(); ++row) {
        double s = b[row];
        const double* wr = w + row * in.size();
        for (std::size_t q = 0; q < in.size(); ++q) s += wr[q] * in[q];
        out[row] = last ? s : std::max(0.0, s);
      }
      cache.act.push_back(std::move(out));
    }
    return cache.act.back()[0];
  }

  void backward(const Topology& t, const Cache& cache, double dscore,
                std::vector<double>& grad) const {
    const std::size_t D = d(), Z = z(), T = rounds();
    const auto edges = admissible_edges();
    const double* p = params_.data();
    double* g = grad.data();

    std::vector<double> dout{dscore};
    for (std::size_t l = mlp_w_.size(); l-- > 0;) {
      const auto& in = cache.act[l];
      const auto& out = cache.act[l + 1];
      const bool last = l + 1 == mlp_w_.size();
      const double* w = p + mlp_w_[l];
      double* gw = g + mlp_w_[l];
      double* gb = g + mlp_b_[l];
      std::vector<double> din(in.size(), 0.0);
      for (std::size_t row = 0; row < out.size(); ++row) {
        const double dpre = last ? dout[row] : (out[row] > 0.0 ? dout[row] : 0.0);
        if (dpre == 0.0) continue;
        gb[row] += dpre;
        const double* wr = w + row * in.size();
        double* gwr = gw + row * in.size();
        for (std::size_t q = 0; q < in.size(); ++q) {
          gwr[q] += dpre * in[q];
          din[q] += dpre * wr[q];
        }
      }
      dout = std::move(din);
    }
    if (!cache.mask.empty()) {
      for (std::size_t k = 0; k < dout.size(); ++k) dout[k] *= cache.mask[k];
    }

    std::vector<double> dh_next(kNumNodes * D), dh_cur(kNumNodes * D), dm(D);
    for (std::size_t c = 0; c < 4; ++c) {
      const CellTopology& cell = t.cell(c);
      const auto& h = cache.h[c];
      const auto& msg = cache.msg[c];
      const auto& pooled = cache.pooled[c];
      std::vector<double> dpooled(D, 0.0);
      for (std::size_t row = 0; row < Z; ++row) {
        const double dzr = dout[c * Z + row];
        if (dzr == 0.0) continue;
        g[out_b_ + row] += dzr;
        for (std::size_t q = 0; q < D; ++q) {
          g[out_w_ + row * D + q] += dzr * pooled[q];
          dpooled[q] += dzr * p[out_w_ + row * D + q];
        }
      }
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      for (std::size_t v = kNumInputNodes; v < kNumNodes; ++v) {
        for (std::size_t q = 0; q < D; ++q) dh_next[v * D + q] = dpooled[q];
      }
      for (std::size_t r = T; r-- > 0;) {
        const double* hin = h.data() + r * kNumNodes * D;
        const double* hout = h.data() + (r + 1) * kNumNodes * D;
        std::fill(dh_cur.begin(), dh_cur.end(), 0.0);
        for (std::size_t q = 0; q < kNumInputNodes * D; ++q) dh_cur[q] += dh_next[q];
        const double* w = p + round_w_[r];
        double* gw = g + round_w_[r];
        double* gb = g + round_b_[r];
        for (std::size_t v = 0; v < 4; ++v) {
          const std::size_t node = v + kNumInputNodes;
          const double* m = msg.data() + (r * 4 + v) * D;
          std::fill(dm.begin(), dm.end(), 0.0);
          for (std::size_t row = 0; row < D; ++row) {
            const double y = hout[node * D + row];
            const double dpre = dh_next[node * D + row] * (1.0 - y * y);
            if (dpre == 0.0) continue;
            gb[row] += dpre;
            for (std::size_t q = 0; q < D; ++q) {
              gw[row * D + q] += dpre * m[q];
              dm[q] += dpre * w[row * D + q];
            }
          }
          for (std::size_t k = 0; k < edges.size(); ++k) {
            if (static_cast<std::size_t>(edges[k].to) != node) continue;
            const int slot = op_slot(cell.op(k));
            if (slot < 0) continue;
            const std::size_t e_at = op_emb_ + static_cast<std::size_t>(slot) * D;
            const std::size_t src = static_cast<std::size_t>(edges[k].from) * D;
            for (std::size_t q = 0; q < D; ++q) {
              g[e_at + q] += dm[q] * hin[src + q];
              dh_cur[src + q] += dm[q] * p[e_at + q];
            }
          }
        }
        std::swap(dh_next, dh_cur);
      }
      for (std::size_t q = 0; q < kNumNodes * D; ++q) g[node_emb_ + q] += dh_next[q];
    }
  }

  PredictorConfig cfg_;
  std::size_t total_ = 0;
  std::size_t node_emb_ = 0, op_emb_ = 0, out_w_ = 0, out_b_ = 0;
  std::vector<std::size_t> round_w_, round_b_, mlp_w_, mlp_b_, mlp_dims_;
  std::vector<double> params_;
  std::vector<double> adam_m_, adam_v_;
  std::int64_t adam_t_ = 0;
};

struct TrainingTrace {
  std::vector<double> epoch_loss;
};

// Pairwise-ranking training with Adam. Items are shuffled each epoch with
// `rng` and split into batches of config.batch_size; pairs are formed
// within a batch.
template <typename Rng>
TrainingTrace surrogate_train(SurrogateModel& model, std::span<const LabeledTopology> data,
                              int epochs, Rng& rng) {
  const auto& cfg = model.config();
  if (data.size() < 2) throw TrainingError("surrogate_train needs at least 2 labeled topologies");
  TrainingTrace trace;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  std::vector<LabeledTopology> batch;
  std::vector<std::vector<double>> masks;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      masks.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(data[order[i]]);
        masks.push_back(model.draw_mask(rng));
      }
      if (SurrogateModel::pair_count(batch) == 0) continue;
      const double loss = model.loss_and_gradient(batch, grad, &masks);
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite ranking loss at epoch " + std::to_string(epoch) +
                            " (step size " + std::to_string(cfg.learning_rate) +
                            ", batch size " + std::to_string(cfg.batch_size) + ")");
      }
      model.adam_step(grad, cfg.learning_rate);
      epoch_loss += loss;
      ++batches;
    }
    trace.epoch_loss.push_back(batches > 0 ? epoch_loss / batches : 0.0);
  }
  return trace;
}

template <typename Rng>
TrainingTrace surrogate_train(SurrogateModel& model, const std::vector<LabeledTopology>& data,
                              int epochs, Rng& rng) {
  return surrogate_train(model, std::span<const LabeledTopology>(data), epochs, rng);
}

// Fraction of strictly ordered pairs whose scores disagree with the labels.
inline double pairwise_violation_rate(const SurrogateModel& model,
                                      std::span<const LabeledTopology> data) {
  std::vector<double> scores;
  scores.reserve(data.size());
  for (const auto& item : data) scores.push_back(model.score(item.topology));
  std::size_t pairs = 0, wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.size(); ++j) {
      if (!(data[i].reward < data[j].reward)) continue;
      ++pairs;
      wrong += scores[i] >= scores[j] ? 1 : 0;
    }
  }
  return pairs == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(pairs);
}

}  // namespace msnas
