// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "zigzag/kv_cache.hpp"
#include "zigzag/tensor.hpp"

#include <cstdint>
#include <vector>

namespace zigzag {

struct ModelConfig {
    int num_layers = 2;
    int num_heads = 2;
    int head_dim = 8;
    int model_dim = 16;  // must equal num_heads * head_dim
    int vocab_size = 64;
    std::uint64_t seed = 0;
};

// Attention-only residual decoder with seeded random weights. No training,
// no MLP, no layernorm: the quantities under study (attention maps, per-layer
// attention outputs) are exactly what the forward pass produces.
struct ToyModel {
    ModelConfig config;
    Matrix embedding;                          // vocab_size x model_dim
    std::vector<std::vector<Matrix>> wq;       // [layer][head], model_dim x head_dim
    std::vector<std::vector<Matrix>> wk;
    std::vector<std::vector<Matrix>> wv;
    std::vector<std::vector<Matrix>> wo;       // [layer][head], head_dim x model_dim
};

// Everything one layer exposes after prefill: full per-head K/V, the last-w
// rows of the causal attention matrix (earlier rows are never consulted by
// any policy or metric), full-attention column sums for heavy-hitter scoring,
// and the final prompt token's attention output y.
struct LayerState {
    int layer = 0;
    std::vector<Matrix> keys;             // [head], n x head_dim
    std::vector<Matrix> values;           // [head], n x head_dim
    std::vector<Matrix> attn;             // [head], w x n, masked entries exactly 0
    std::vector<Vector> all_query_sums;   // [head], length n, column sums over all n queries
    Vector hidden;                        // model_dim, final-token y for this layer
};

struct PrefillResult {
    std::vector<LayerState> layers;
    Vector logits;  // vocab_size, next-token logits after the final prompt token
};

struct DecodeResult {
    Vector logits;
    std::vector<Vector> layer_outputs;  // per-layer y of the decoded token
};

// Final prompt token replayed over (possibly evicted) prefill caches. Each
// layer attends only to its kept positions; upstream eviction flows into
// downstream queries through the residual stream.
struct PartialForwardResult {
    Vector logits;
    std::vector<Vector> layer_outputs;  // per-layer y-hat
};

/// Deterministic build: identical config (seed included) gives bit-identical
/// weights. Throws ConfigError when dimensions are inconsistent.
ToyModel build_model(const ModelConfig& cfg);

/// Sinusoidal absolute positional encoding for one position.
Vector positional_encoding(int position, int model_dim);

/// Full causal forward pass over `tokens`, recording per-layer state with an
/// observation window of w rows. Throws Error subtypes on empty tokens,
/// out-of-vocab ids, or w outside [1, n].
PrefillResult prefill(const ToyModel& model, const std::vector<int>& tokens, int w);

/// Materialize full per-layer caches from prefill states (the pre-eviction
/// cache every policy starts from).
std::vector<KVCache> caches_from_prefill(const std::vector<LayerState>& states);

/// One incremental decode step: appends the token's k/v to every layer cache,
/// attends over the retained entries, returns logits and per-layer outputs.
/// Throws CacheError when a cached position is not strictly below `position`.
DecodeResult decode_step(const ToyModel& model, std::vector<KVCache>& caches, int token,
                         int position);

/// Replay the final prompt token over evicted prefill caches, per `decision`.
/// With a keep-all decision this reproduces prefill's final-token outputs and
/// logits (up to accumulation-order noise well below 1e-12).
PartialForwardResult partial_forward(const ToyModel& model, const std::vector<LayerState>& states,
                                     const std::vector<int>& tokens,
                                     const EvictionDecision& decision);

/// Deterministic token ids in [0, vocab) for toy prompts.
std::vector<int> make_tokens(std::uint64_t seed, int count, int vocab_size);

}  // namespace zigzag
