// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0

#include "zigzag/kv_cache.hpp"

#include <algorithm>
#include <string>

namespace zigzag {

EvictionDecision full_decision(int n, int num_layers, int num_heads) {
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    EvictionDecision d;
    d.kept.assign(num_layers, std::vector<std::vector<int>>(num_heads, all));
    return d;
}

KVCache apply_eviction(const KVCache& cache, const EvictionDecision& decision) {
    if (cache.layer < 0 || cache.layer >= decision.num_layers()) {
        throw ShapeError("apply_eviction: decision has no layer " + std::to_string(cache.layer));
    }
    const auto& layer_kept = decision.kept[cache.layer];
    if (layer_kept.size() != cache.heads.size()) {
        throw ShapeError("apply_eviction: decision covers " + std::to_string(layer_kept.size()) +
                         " heads, cache has " + std::to_string(cache.heads.size()));
    }

    KVCache out;
    out.layer = cache.layer;
    out.heads.resize(cache.heads.size());
    int max_kept = 0;
    for (size_t h = 0; h < cache.heads.size(); ++h) {
        const auto& entries = cache.heads[h].entries;
        auto& kept_entries = out.heads[h].entries;
        kept_entries.reserve(layer_kept[h].size());
        // Entries are position-sorted, so a binary search per kept position
        // keeps the pass cheap and order-preserving.
        for (int pos : layer_kept[h]) {
            auto it = std::lower_bound(entries.begin(), entries.end(), pos,
                                       [](const KVEntry& e, int p) { return e.position < p; });
            if (it == entries.end() || it->position != pos) {
                throw CacheError("apply_eviction: layer " + std::to_string(cache.layer) +
                                 " head " + std::to_string(h) + " has no position " +
                                 std::to_string(pos));
            }
            kept_entries.push_back(*it);
        }
        max_kept = std::max(max_kept, static_cast<int>(kept_entries.size()));
    }
    out.capacity = max_kept;
    return out;
}

double retained_attention_mass(const Vector& full_attention_row, const std::vector<int>& kept) {
    double mass = 0.0;
    for (int pos : kept) {
        if (pos < 0 || pos >= full_attention_row.size()) {
            throw ShapeError("retained_attention_mass: position " + std::to_string(pos) +
                             " outside row of length " + std::to_string(full_attention_row.size()));
        }
        mass += full_attention_row[pos];
    }
    return mass;
}

}  // namespace zigzag
