// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "zigzag/tensor.hpp"

#include <vector>

namespace zigzag {

// One retained token: its original prompt position plus the per-head key and
// value projections. Positions are never re-indexed after eviction.
struct KVEntry {
    int position = 0;
    Vector key;
    Vector value;
};

// Entries of one attention head, positions strictly increasing.
struct HeadCache {
    std::vector<KVEntry> entries;
};

// Per-layer retained key/value storage. `capacity` records the layer budget
// that produced the current contents; entry counts never exceed it right
// after an eviction (decode appends may grow past it, which is the normal
// prompt-compression setting: compress once, then generate).
struct KVCache {
    int layer = 0;
    std::vector<HeadCache> heads;
    int capacity = 0;
};

// Kept positions for every layer and head: kept[layer][head] is an ascending
// list of original token positions that survive eviction.
struct EvictionDecision {
    std::vector<std::vector<std::vector<int>>> kept;

    int num_layers() const { return static_cast<int>(kept.size()); }
    int num_heads() const { return kept.empty() ? 0 : static_cast<int>(kept[0].size()); }
};

/// Decision that keeps every position 0..n-1 in every layer and head.
EvictionDecision full_decision(int n, int num_layers, int num_heads);

/// Retain exactly the decided positions for this cache's layer, order
/// preserved. Capacity becomes the largest per-head kept count. Throws
/// CacheError when the decision names a position the cache does not hold,
/// ShapeError when the decision does not cover this layer/head.
KVCache apply_eviction(const KVCache& cache, const EvictionDecision& decision);

/// Sum of attention entries at the kept positions; the complement of
/// attention loss. Throws ShapeError when a position is out of range.
double retained_attention_mass(const Vector& full_attention_row, const std::vector<int>& kept);

}  // namespace zigzag
