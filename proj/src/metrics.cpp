// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0
#include "zigzag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace zigzag {

namespace {

void check_eps(double eps) {
  if (!(eps > 0.0) || !(eps < 1.0)) {
    throw ValueError("eps must lie in (0, 1), got " + std::to_string(eps));
  }
}

void check_decision_shape(const std::vector<LayerState>& states,
                          const EvictionDecision& decision) {
  if (decision.num_layers() != static_cast<int>(states.size())) {
    throw ShapeError("decision covers " +
                     std::to_string(decision.num_layers()) + " layers, states have " +
                     std::to_string(states.size()));
  }
  for (std::size_t l = 0; l < states.size(); ++l) {
    if (decision.kept[l].size() != states[l].attn.size()) {
      throw ShapeError("decision layer " + std::to_string(l) + " covers " +
                       std::to_string(decision.kept[l].size()) +
                       " heads, state has " +
                       std::to_string(states[l].attn.size()));
    }
  }
}

}  // namespace

int mba(const Vector& row, double eps) {
  check_eps(eps);
  const int n = static_cast<int>(row.size());
  if (n == 0) throw ValueError("mba: empty attention row");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(row[i]) || row[i] < -kMetricTolerance) {
      throw ValueError("mba: attention row entries must be non-negative");
    }
    sum += row[i];
  }
  if (std::abs(sum - 1.0) > kRowSumTolerance) {
    throw ValueError("mba: attention row sums to " + std::to_string(sum) +
                     ", expected 1");
  }
  std::vector<double> sorted(row.data(), row.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double acc = 0.0;
  for (int k = 1; k <= n; ++k) {
    acc += sorted[k - 1];
    if (1.0 - acc <= eps + kMetricTolerance) return k;
  }
  return n;  // unreachable for a valid probability row, kept as a backstop
}

double lmba(const LayerState& state, double eps) {
  check_eps(eps);
  if (state.attn.empty()) throw ValueError("lmba: layer state has no heads");
  double total = 0.0;
  for (const Matrix& a : state.attn) {
    if (a.rows() == 0 || a.cols() == 0) {
      throw ShapeError("lmba: empty attention window matrix");
    }
    // Each window row is a probability vector, so their mean is one too.
    Vector mean_row = a.colwise().mean().transpose();
    total += static_cast<double>(mba(mean_row, eps));
  }
  return total / static_cast<double>(state.attn.size());
}

std::vector<double> lmba_profile(const std::vector<LayerState>& states,
                                 double eps) {
  std::vector<double> out;
  out.reserve(states.size());
  for (const LayerState& s : states) out.push_back(lmba(s, eps));
  return out;
}

int lmbo(const ToyModel& model, const std::vector<int>& tokens,
         const std::vector<LayerState>& states, int layer,
         const std::vector<Vector>& per_head_scores, double eps) {
  check_eps(eps);
  const int num_layers = static_cast<int>(states.size());
  if (layer < 0 || layer >= num_layers) {
    throw ValueError("lmbo: layer " + std::to_string(layer) +
                     " out of range for " + std::to_string(num_layers) +
                     " layers");
  }
  const LayerState& target = states[layer];
  const int num_heads = static_cast<int>(target.attn.size());
  if (static_cast<int>(per_head_scores.size()) != num_heads) {
    throw ShapeError("lmbo: got " + std::to_string(per_head_scores.size()) +
                     " score vectors for " + std::to_string(num_heads) +
                     " heads");
  }
  const int w = static_cast<int>(target.attn[0].rows());
  const int n = static_cast<int>(target.attn[0].cols());
  if (w >= n) {
    throw ValueError("lmbo: window " + std::to_string(w) +
                     " must be smaller than sequence length " +
                     std::to_string(n));
  }
  const int prefix = n - w;
  for (const Vector& s : per_head_scores) {
    if (static_cast<int>(s.size()) < prefix) {
      throw ShapeError("lmbo: score vector shorter than the " +
                       std::to_string(prefix) + "-position prefix");
    }
  }

  // Rank the prefix positions once per head (score descending, ties to the
  // lower index, matching top_k_indices); growing budgets then keep nested
  // sets, so the scan probes each budget's top-(B-w) prefix selection.
  std::vector<std::vector<int>> ranked(num_heads);
  for (int h = 0; h < num_heads; ++h) {
    std::vector<double> prefix_scores(per_head_scores[h].data(),
                                      per_head_scores[h].data() + prefix);
    ranked[h].resize(prefix);
    std::iota(ranked[h].begin(), ranked[h].end(), 0);
    std::stable_sort(ranked[h].begin(), ranked[h].end(), [&](int a, int b) {
      return prefix_scores[a] > prefix_scores[b];
    });
  }

  for (int budget = w + 1; budget <= n; ++budget) {
    EvictionDecision decision = full_decision(n, num_layers, num_heads);
    for (int h = 0; h < num_heads; ++h) {
      std::vector<int> kept;
      const int extra = budget - w;
      kept.insert(kept.end(), ranked[h].begin(), ranked[h].begin() + extra);
      for (int p = n - w; p < n; ++p) kept.push_back(p);
      std::sort(kept.begin(), kept.end());
      decision.kept[layer][h] = std::move(kept);
    }
    PartialForwardResult replay = partial_forward(model, states, tokens, decision);
    const double loss =
        1.0 - cosine_similarity(target.hidden, replay.layer_outputs[layer]);
    if (loss < eps + kMetricTolerance) return budget;
  }
  throw Error("lmbo: no budget up to " + std::to_string(n) +
              " reached the output threshold");
}

std::vector<double> attention_loss(const std::vector<LayerState>& states,
                                   const EvictionDecision& decision,
                                   double eps) {
  check_eps(eps);
  check_decision_shape(states, decision);
  std::vector<double> out;
  out.reserve(states.size());
  for (std::size_t l = 0; l < states.size(); ++l) {
    double total = 0.0;
    int rows = 0;
    for (std::size_t h = 0; h < states[l].attn.size(); ++h) {
      const Matrix& a = states[l].attn[h];
      const std::vector<int>& kept = decision.kept[l][h];
      for (int r = 0; r < a.rows(); ++r) {
        const double retained =
            retained_attention_mass(a.row(r).transpose(), kept);
        total += std::max(0.0, (1.0 - eps) - retained);
        ++rows;
      }
    }
    if (rows == 0) throw ShapeError("attention_loss: layer with no window rows");
    out.push_back(total / static_cast<double>(rows));
  }
  return out;
}

std::vector<double> attention_loss_secondary(
    const std::vector<LayerState>& states, const EvictionDecision& decision) {
  check_decision_shape(states, decision);
  std::vector<double> out;
  out.reserve(states.size());
  for (std::size_t l = 0; l < states.size(); ++l) {
    double total = 0.0;
    int rows = 0;
    for (std::size_t h = 0; h < states[l].attn.size(); ++h) {
      const Matrix& a = states[l].attn[h];
      const std::vector<int>& kept = decision.kept[l][h];
      for (int r = 0; r < a.rows(); ++r) {
        total += 1.0 - retained_attention_mass(a.row(r).transpose(), kept);
        ++rows;
      }
    }
    if (rows == 0) {
      throw ShapeError("attention_loss_secondary: layer with no window rows");
    }
    out.push_back(total / static_cast<double>(rows));
  }
  return out;
}

std::vector<double> output_loss(const ToyModel& model,
                                const std::vector<int>& tokens,
                                const std::vector<LayerState>& states,
                                const EvictionDecision& decision) {
  check_decision_shape(states, decision);
  PartialForwardResult replay = partial_forward(model, states, tokens, decision);
  std::vector<double> out;
  out.reserve(states.size());
  for (std::size_t l = 0; l < states.size(); ++l) {
    out.push_back(1.0 -
                  cosine_similarity(states[l].hidden, replay.layer_outputs[l]));
  }
  return out;
}

double needle_retention(const EvictionDecision& decision,
                        const std::vector<int>& needle_positions) {
  if (needle_positions.empty()) {
    throw ValueError("needle_retention: no needle positions given");
  }
  long long hits = 0;
  long long total = 0;
  for (const auto& layer : decision.kept) {
    for (const auto& kept : layer) {
      for (int needle : needle_positions) {
        ++total;
        if (std::find(kept.begin(), kept.end(), needle) != kept.end()) ++hits;
      }
    }
  }
  if (total == 0) throw ValueError("needle_retention: empty decision");
  return static_cast<double>(hits) / static_cast<double>(total);
}

double layer_mean(const std::vector<double>& values) {
  if (values.empty()) throw ValueError("layer_mean: empty metric vector");
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

}  // namespace zigzag
