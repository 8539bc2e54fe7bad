// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0
#include "zigzag/policies.hpp"

#include <algorithm>
#include <string>

#include "zigzag/metrics.hpp"

namespace zigzag {

namespace {

struct StackShape {
  int num_layers = 0;
  int num_heads = 0;
  int seq_len = 0;
  int window = 0;
};

StackShape shape_of(const std::vector<LayerState>& states) {
  if (states.empty()) throw ShapeError("policy: no layer states");
  StackShape s;
  s.num_layers = static_cast<int>(states.size());
  s.num_heads = static_cast<int>(states[0].attn.size());
  if (s.num_heads == 0) throw ShapeError("policy: layer 0 has no heads");
  s.window = static_cast<int>(states[0].attn[0].rows());
  s.seq_len = static_cast<int>(states[0].attn[0].cols());
  for (const LayerState& st : states) {
    if (static_cast<int>(st.attn.size()) != s.num_heads) {
      throw ShapeError("policy: inconsistent head count across layers");
    }
    for (const Matrix& a : st.attn) {
      if (a.rows() != s.window || a.cols() != s.seq_len) {
        throw ShapeError("policy: inconsistent attention window shapes");
      }
    }
  }
  if (s.window < 1 || s.seq_len < s.window) {
    throw ShapeError("policy: window must satisfy 1 <= w <= n");
  }
  return s;
}

void check_plan(const BudgetPlan& plan, int num_layers) {
  if (static_cast<int>(plan.budgets.size()) != num_layers) {
    throw ConfigError("policy: plan covers " +
                      std::to_string(plan.budgets.size()) + " layers, states have " +
                      std::to_string(num_layers));
  }
  for (int b : plan.budgets) {
    if (b < 1) throw ConfigError("policy: per-layer budget must be >= 1");
  }
}

/// Every policy degenerates to FullKV once the mean per-layer budget reaches
/// the sequence length; plans themselves stay uncapped.
bool keeps_everything(const BudgetPlan& plan, int n) {
  return plan.total >=
         static_cast<long long>(n) * static_cast<long long>(plan.budgets.size());
}

std::vector<int> all_positions(int n) {
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) out[i] = i;
  return out;
}

std::vector<int> recent_positions(int n, int count) {
  std::vector<int> out;
  out.reserve(count);
  for (int p = n - count; p < n; ++p) out.push_back(p);
  return out;
}

/// Shared SnapKV-style selector: window plus top-(b - w) pooled prefix
/// positions per head. With graceful = true, budgets at or below the window
/// keep the most recent b positions instead of failing.
EvictionDecision topk_window_decision(const std::vector<LayerState>& states,
                                      const BudgetPlan& plan, int pool_kernel,
                                      bool graceful, const StackShape& shape) {
  check_plan(plan, shape.num_layers);
  if (keeps_everything(plan, shape.seq_len)) {
    return full_decision(shape.seq_len, shape.num_layers, shape.num_heads);
  }
  const int n = shape.seq_len;
  const int w = shape.window;
  EvictionDecision decision;
  decision.kept.resize(shape.num_layers);
  for (int l = 0; l < shape.num_layers; ++l) {
    const int b = std::min(plan.budgets[l], n);
    decision.kept[l].resize(shape.num_heads);
    if (b >= n) {
      for (int h = 0; h < shape.num_heads; ++h) {
        decision.kept[l][h] = all_positions(n);
      }
      continue;
    }
    if (b <= w) {
      if (!graceful) {
        throw ConfigError("policy: layer " + std::to_string(l) + " budget " +
                          std::to_string(b) + " does not exceed the window " +
                          std::to_string(w));
      }
      for (int h = 0; h < shape.num_heads; ++h) {
        decision.kept[l][h] = recent_positions(n, b);
      }
      continue;
    }
    const std::vector<Vector> scores = importance_scores(states[l], pool_kernel);
    for (int h = 0; h < shape.num_heads; ++h) {
      std::vector<int> kept = top_k_indices(scores[h], b - w);
      for (int p = n - w; p < n; ++p) kept.push_back(p);
      decision.kept[l][h] = std::move(kept);  // prefix ids < n - w: ascending
    }
  }
  return decision;
}

}  // namespace

PolicyKind policy_from_name(const std::string& name) {
  if (name == "full") return PolicyKind::FullKV;
  if (name == "streaming") return PolicyKind::StreamingLLM;
  if (name == "h2o") return PolicyKind::H2O;
  if (name == "snapkv") return PolicyKind::SnapKV;
  if (name == "pyramidkv") return PolicyKind::PyramidKV;
  if (name == "zigzag") return PolicyKind::ZigZagKV;
  throw ConfigError("unknown policy '" + name +
                    "' (expected full, streaming, h2o, snapkv, pyramidkv, "
                    "or zigzag)");
}

std::string policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::FullKV: return "full";
    case PolicyKind::StreamingLLM: return "streaming";
    case PolicyKind::H2O: return "h2o";
    case PolicyKind::SnapKV: return "snapkv";
    case PolicyKind::PyramidKV: return "pyramidkv";
    case PolicyKind::ZigZagKV: return "zigzag";
  }
  throw ConfigError("unknown policy kind");
}

Vector attention_column_sums(const LayerState& state, int head) {
  if (head < 0 || head >= static_cast<int>(state.attn.size())) {
    throw ShapeError("attention_column_sums: head " + std::to_string(head) +
                     " out of range");
  }
  const Matrix& a = state.attn[head];
  if (a.rows() == 0 || a.cols() == 0) {
    throw ShapeError("attention_column_sums: empty attention window");
  }
  return a.colwise().sum().transpose();
}

std::vector<Vector> importance_scores(const LayerState& state,
                                      int pool_kernel) {
  if (pool_kernel < 1 || pool_kernel % 2 == 0) {
    throw ConfigError("pool_kernel must be odd and >= 1, got " +
                      std::to_string(pool_kernel));
  }
  std::vector<Vector> out;
  out.reserve(state.attn.size());
  const int radius = pool_kernel / 2;
  for (std::size_t h = 0; h < state.attn.size(); ++h) {
    const Vector sums = attention_column_sums(state, static_cast<int>(h));
    const int n = static_cast<int>(sums.size());
    const int w = static_cast<int>(state.attn[h].rows());
    const int prefix = n - w;
    Vector pooled(prefix);
    for (int i = 0; i < prefix; ++i) {
      const int lo = std::max(0, i - radius);
      const int hi = std::min(prefix - 1, i + radius);
      double best = sums[lo];
      for (int j = lo + 1; j <= hi; ++j) best = std::max(best, sums[j]);
      pooled[i] = best;
    }
    out.push_back(std::move(pooled));
  }
  return out;
}

EvictionDecision decide_streaming(int n, const BudgetPlan& plan,
                                  int sink_count, int num_heads) {
  if (n < 1) throw ConfigError("decide_streaming: n must be >= 1");
  if (num_heads < 1) throw ConfigError("decide_streaming: need >= 1 head");
  if (sink_count < 0) {
    throw ConfigError("decide_streaming: sink_count must be >= 0");
  }
  if (plan.budgets.empty()) throw ConfigError("decide_streaming: empty plan");
  check_plan(plan, static_cast<int>(plan.budgets.size()));
  if (keeps_everything(plan, n)) {
    return full_decision(n, static_cast<int>(plan.budgets.size()), num_heads);
  }
  EvictionDecision decision;
  decision.kept.resize(plan.budgets.size());
  for (std::size_t l = 0; l < plan.budgets.size(); ++l) {
    const int b = std::min(plan.budgets[l], n);
    const int sinks = std::min(sink_count, b);
    const int recent = b - sinks;
    std::vector<int> kept;
    kept.reserve(b);
    for (int p = 0; p < sinks; ++p) kept.push_back(p);
    for (int p = n - recent; p < n; ++p) kept.push_back(p);
    decision.kept[l].assign(num_heads, kept);
  }
  return decision;
}

EvictionDecision decide_h2o(const std::vector<LayerState>& states,
                            const BudgetPlan& plan, double recent_fraction) {
  const StackShape shape = shape_of(states);
  check_plan(plan, shape.num_layers);
  if (!(recent_fraction >= 0.0) || !(recent_fraction <= 1.0)) {
    throw ConfigError("decide_h2o: recent_fraction must lie in [0, 1]");
  }
  const int n = shape.seq_len;
  if (keeps_everything(plan, n)) {
    return full_decision(n, shape.num_layers, shape.num_heads);
  }
  EvictionDecision decision;
  decision.kept.resize(shape.num_layers);
  for (int l = 0; l < shape.num_layers; ++l) {
    const int b = std::min(plan.budgets[l], n);
    const int recent = static_cast<int>(b * recent_fraction);
    const int heavy = b - recent;
    decision.kept[l].resize(shape.num_heads);
    for (int h = 0; h < shape.num_heads; ++h) {
      // Accumulated attention over all queries when available (prefill),
      // otherwise over the observation window only (trace-backed states).
      Vector scores = states[l].all_query_sums.empty()
                          ? attention_column_sums(states[l], h)
                          : states[l].all_query_sums[h];
      if (static_cast<int>(scores.size()) != n) {
        throw ShapeError("decide_h2o: score vector length mismatch");
      }
      Vector candidates = scores.head(n - recent);
      std::vector<int> kept = top_k_indices(candidates, heavy);
      for (int p = n - recent; p < n; ++p) kept.push_back(p);
      decision.kept[l][h] = std::move(kept);
    }
  }
  return decision;
}

EvictionDecision decide_snapkv(const std::vector<LayerState>& states,
                               const BudgetPlan& plan, int pool_kernel) {
  return topk_window_decision(states, plan, pool_kernel, /*graceful=*/false,
                              shape_of(states));
}

EvictionDecision decide_pyramidkv(const std::vector<LayerState>& states,
                                  const BudgetPlan& plan, int pool_kernel) {
  // Same per-layer selector as SnapKV; the pyramid lives in the plan.
  return topk_window_decision(states, plan, pool_kernel, /*graceful=*/false,
                              shape_of(states));
}

PolicyResult decide_zigzag(const std::vector<LayerState>& states, int budget,
                           int b_bound, int pool_kernel, double eps) {
  const StackShape shape = shape_of(states);
  if (b_bound == -1) b_bound = budget / 2;
  const std::vector<double> profile = lmba_profile(states, eps);
  const UncertaintyProfile uncertainty = uncertainty_profile(profile);
  PolicyResult result;
  result.plan = zigzag_plan(budget, shape.num_layers, uncertainty, b_bound);
  result.decision = topk_window_decision(states, result.plan, pool_kernel,
                                         /*graceful=*/true, shape);
  return result;
}

PolicyResult run_policy(PolicyKind kind, const std::vector<LayerState>& states,
                        int budget, const PolicyConfig& config) {
  const StackShape shape = shape_of(states);
  PolicyResult result;
  switch (kind) {
    case PolicyKind::FullKV:
      result.plan = uniform_plan(shape.seq_len, shape.num_layers);
      result.decision =
          full_decision(shape.seq_len, shape.num_layers, shape.num_heads);
      return result;
    case PolicyKind::StreamingLLM:
      result.plan = uniform_plan(budget, shape.num_layers);
      result.decision = decide_streaming(shape.seq_len, result.plan,
                                         config.sink_count, shape.num_heads);
      return result;
    case PolicyKind::H2O:
      result.plan = uniform_plan(budget, shape.num_layers);
      result.decision = decide_h2o(states, result.plan, config.recent_fraction);
      return result;
    case PolicyKind::SnapKV:
      result.plan = uniform_plan(budget, shape.num_layers);
      result.decision = decide_snapkv(states, result.plan, config.pool_kernel);
      return result;
    case PolicyKind::PyramidKV:
      result.plan =
          pyramid_plan(budget, shape.num_layers, config.pyramid_min_ratio);
      result.decision =
          decide_pyramidkv(states, result.plan, config.pool_kernel);
      return result;
    case PolicyKind::ZigZagKV:
      return decide_zigzag(states, budget, config.b_bound, config.pool_kernel,
                           config.eps);
  }
  throw ConfigError("run_policy: unknown policy kind");
}

}  // namespace zigzag
