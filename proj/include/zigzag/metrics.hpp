// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zigzag/kv_cache.hpp"
#include "zigzag/model.hpp"
#include "zigzag/tensor.hpp"

namespace zigzag {

/// Slack added to threshold comparisons so exact boundary cases (for example a
/// uniform row whose top-(n-1) mass is exactly 1 - eps) count as satisfied
/// instead of being lost to rounding.
inline constexpr double kMetricTolerance = 1e-12;

/// Attention rows fed to the metrics must be probability vectors; their sum
/// may drift from 1 by at most this much.
inline constexpr double kRowSumTolerance = 1e-6;

/// Minimum budget of attention: the smallest k such that the k largest
/// entries of `row` capture all but `eps` of its mass, i.e.
/// 1 - sum(top-k) <= eps (+ tolerance). `row` must be a probability vector.
int mba(const Vector& row, double eps = 0.1);

/// Layer minimum budget of attention: the mean over heads of the MBA of each
/// head's mean attention row over the last-w query window.
double lmba(const LayerState& state, double eps = 0.1);

/// Per-layer LMBA for a whole stack of layer states.
std::vector<double> lmba_profile(const std::vector<LayerState>& states,
                                 double eps = 0.1);

/// Layer minimum budget for output: the smallest per-head budget B in
/// [w+1, n] such that evicting layer `layer` down to (window + top-(B-w)
/// prefix positions by `per_head_scores`) keeps the layer's attention output
/// for the final token within `eps` cosine loss of the uncompressed output.
/// Other layers keep their full caches. `per_head_scores` holds one score
/// vector per head covering at least the n-w prefix positions; entries past
/// the prefix are ignored.
int lmbo(const ToyModel& model, const std::vector<int>& tokens,
         const std::vector<LayerState>& states, int layer,
         const std::vector<Vector>& per_head_scores, double eps = 0.1);

/// Per-layer attention loss of an eviction decision: the mean over heads and
/// window rows of max(0, (1 - eps) - retained attention mass). Zero means
/// every window row keeps at least 1 - eps of its mass.
std::vector<double> attention_loss(const std::vector<LayerState>& states,
                                   const EvictionDecision& decision,
                                   double eps = 0.1);

/// Companion to attention_loss without the hinge: the per-layer mean of
/// 1 - retained attention mass over heads and window rows.
std::vector<double> attention_loss_secondary(
    const std::vector<LayerState>& states, const EvictionDecision& decision);

/// Per-layer output loss: 1 - cosine similarity between each layer's
/// attention output for the final token with full caches and with the caches
/// evicted per `decision`. The evicted outputs come from a single replay of
/// the final token, so upstream eviction error propagates downstream.
std::vector<double> output_loss(const ToyModel& model,
                                const std::vector<int>& tokens,
                                const std::vector<LayerState>& states,
                                const EvictionDecision& decision);

/// Fraction of (layer, head, needle position) triples retained by the
/// decision. 1.0 means every head in every layer kept every needle.
double needle_retention(const EvictionDecision& decision,
                        const std::vector<int>& needle_positions);

/// Everything one experiment cell measures, plus the settings that produced
/// it. Vectors are indexed by layer; empty vectors mean "not computed".
struct MetricsReport {
  std::string policy;
  std::string source;  // "toy", "synth", or "trace"
  int budget = 0;
  int b_bound = -1;  // -1 when the policy has no bound parameter
  std::uint64_t seed = 0;
  int num_layers = 0;
  int num_heads = 0;
  int seq_len = 0;
  int window = 0;
  std::vector<double> lmba;
  std::vector<int> lmbo;
  std::vector<double> attn_loss;
  std::vector<double> attn_loss_secondary;
  std::vector<double> out_loss;
  double needle_retention = -1.0;  // -1 when not measured
};

/// Mean of a per-layer metric vector. ValueError on empty input.
double layer_mean(const std::vector<double>& values);

}  // namespace zigzag
