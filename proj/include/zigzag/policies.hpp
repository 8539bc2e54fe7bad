// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "zigzag/budget.hpp"
#include "zigzag/kv_cache.hpp"
#include "zigzag/model.hpp"
#include "zigzag/tensor.hpp"

namespace zigzag {

/// The cache eviction policies the simulator can run.
enum class PolicyKind {
  FullKV,       // keep everything (baseline)
  StreamingLLM, // attention sinks + most recent positions
  H2O,          // heavy hitters by accumulated attention + recent positions
  SnapKV,       // observation-window scores, pooled, uniform budgets
  PyramidKV,    // SnapKV selection with descending per-layer budgets
  ZigZagKV,     // SnapKV selection with uncertainty-driven bounded budgets
};

/// Parse a lowercase policy name ("full", "streaming", "h2o", "snapkv",
/// "pyramidkv", "zigzag"). ConfigError on anything else.
PolicyKind policy_from_name(const std::string& name);
std::string policy_name(PolicyKind kind);

/// Tunables shared by the policy family. Defaults follow the simulator's
/// standard configuration.
struct PolicyConfig {
  int sink_count = 4;              // StreamingLLM attention sinks
  double recent_fraction = 0.5;    // H2O share of budget spent on recency
  int pool_kernel = 7;             // SnapKV-family max-pool width (odd)
  double pyramid_min_ratio = 0.125;// top-layer budget as a share of the mean
  int b_bound = -1;                // ZigZagKV floor; -1 means budget / 2
  double eps = 0.1;                // attention-mass threshold for LMBA
};

/// Sum of each head's window attention rows per key position (length n).
/// This is the raw importance signal before pooling or truncation.
Vector attention_column_sums(const LayerState& state, int head);

/// Per-head importance of the n-w prefix positions: window column sums,
/// truncated to the prefix, then max-pooled with an edge-clamped kernel.
/// pool_kernel must be odd and >= 1; 1 disables pooling.
std::vector<Vector> importance_scores(const LayerState& state,
                                      int pool_kernel);

/// StreamingLLM: per layer keep the first min(sink_count, budget) positions
/// plus the most recent remainder. Heads within a layer share the decision.
EvictionDecision decide_streaming(int n, const BudgetPlan& plan,
                                  int sink_count, int num_heads);

/// H2O: per head keep floor(budget * recent_fraction) most recent positions
/// plus the highest accumulated-attention positions outside that block.
/// Uses each head's full column sums from prefill when present, otherwise
/// falls back to window column sums (trace-backed states).
EvictionDecision decide_h2o(const std::vector<LayerState>& states,
                            const BudgetPlan& plan, double recent_fraction);

/// SnapKV: per head keep the w-position observation window plus the
/// top-(budget - w) prefix positions by pooled importance. Budgets at or
/// below the window width are a ConfigError.
EvictionDecision decide_snapkv(const std::vector<LayerState>& states,
                               const BudgetPlan& plan, int pool_kernel);

/// PyramidKV: SnapKV selection driven by a descending per-layer plan
/// (callers normally pass pyramid_plan output).
EvictionDecision decide_pyramidkv(const std::vector<LayerState>& states,
                                  const BudgetPlan& plan, int pool_kernel);

/// A policy decision together with the per-layer budget plan behind it.
struct PolicyResult {
  EvictionDecision decision;
  BudgetPlan plan;
};

/// ZigZagKV: measure per-layer LMBA, convert to uncertainty shares, allocate
/// bounded budgets, then select like SnapKV per layer. Layers whose budget
/// falls at or below the window degrade to keeping the most recent positions
/// instead of failing. b_bound = -1 selects the default budget / 2.
PolicyResult decide_zigzag(const std::vector<LayerState>& states, int budget,
                           int b_bound, int pool_kernel, double eps = 0.1);

/// Build the plan and decision for any policy with one call. `budget` is the
/// mean per-layer per-head budget B; FullKV ignores it.
PolicyResult run_policy(PolicyKind kind, const std::vector<LayerState>& states,
                        int budget, const PolicyConfig& config = {});

}  // namespace zigzag
