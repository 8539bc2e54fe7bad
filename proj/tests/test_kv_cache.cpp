// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "zigzag/kv_cache.hpp"
#include "zigzag/tensor.hpp"

#include <algorithm>
#include <random>
#include <vector>

using zigzag::EvictionDecision;
using zigzag::KVCache;
using zigzag::Vector;

namespace {

KVCache make_cache(int layer, int heads, int n, int d) {
    KVCache c;
    c.layer = layer;
    c.heads.resize(heads);
    c.capacity = n;
    for (int h = 0; h < heads; ++h) {
        for (int p = 0; p < n; ++p) {
            zigzag::KVEntry e;
            e.position = p;
            e.key = Vector::Constant(d, 100.0 * h + p);
            e.value = Vector::Constant(d, -(100.0 * h + p));
            c.heads[h].entries.push_back(e);
        }
    }
    return c;
}

Vector random_distribution(std::mt19937_64& rng, int n) {
    Vector row(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        row[i] = 1e-9 + (rng() >> 11) * 0x1.0p-53;
        total += row[i];
    }
    row /= total;
    return row;
}

double subset_mass(const Vector& row, unsigned mask) {
    double m = 0.0;
    for (int i = 0; i < row.size(); ++i) {
        if (mask & (1u << i)) m += row[i];
    }
    return m;
}

}  // namespace

TEST_CASE("apply_eviction: keep-all is the identity") {
    KVCache c = make_cache(0, 2, 5, 3);
    EvictionDecision d = zigzag::full_decision(5, 1, 2);
    KVCache out = zigzag::apply_eviction(c, d);
    REQUIRE(out.heads.size() == 2);
    for (int h = 0; h < 2; ++h) {
        REQUIRE(out.heads[h].entries.size() == 5);
        for (int p = 0; p < 5; ++p) {
            CHECK(out.heads[h].entries[p].position == p);
            CHECK(out.heads[h].entries[p].key == c.heads[h].entries[p].key);
        }
    }
}

TEST_CASE("apply_eviction: empty decision empties the cache") {
    KVCache c = make_cache(0, 2, 4, 2);
    EvictionDecision d;
    d.kept.assign(1, std::vector<std::vector<int>>(2, std::vector<int>{}));
    KVCache out = zigzag::apply_eviction(c, d);
    CHECK(out.heads[0].entries.empty());
    CHECK(out.heads[1].entries.empty());
    CHECK(out.capacity == 0);
}

TEST_CASE("apply_eviction: 5-token cache keeping {0,3,4}") {
    KVCache c = make_cache(1, 1, 5, 2);
    EvictionDecision d;
    d.kept.assign(2, std::vector<std::vector<int>>(1, std::vector<int>{0, 3, 4}));
    KVCache out = zigzag::apply_eviction(c, d);
    REQUIRE(out.heads[0].entries.size() == 3);
    CHECK(out.heads[0].entries[0].position == 0);
    CHECK(out.heads[0].entries[1].position == 3);
    CHECK(out.heads[0].entries[2].position == 4);
    CHECK(out.capacity == 3);
}

TEST_CASE("apply_eviction: unknown position is a cache error") {
    KVCache c = make_cache(0, 1, 3, 2);
    EvictionDecision d;
    d.kept.assign(1, std::vector<std::vector<int>>(1, std::vector<int>{0, 7}));
    CHECK_THROWS_AS(zigzag::apply_eviction(c, d), zigzag::CacheError);
}

TEST_CASE("apply_eviction: idempotent for a fixed decision") {
    KVCache c = make_cache(0, 2, 6, 2);
    EvictionDecision d;
    d.kept.assign(1, std::vector<std::vector<int>>(2, std::vector<int>{1, 2, 5}));
    KVCache once = zigzag::apply_eviction(c, d);
    KVCache twice = zigzag::apply_eviction(once, d);
    REQUIRE(once.heads.size() == twice.heads.size());
    for (size_t h = 0; h < once.heads.size(); ++h) {
        REQUIRE(once.heads[h].entries.size() == twice.heads[h].entries.size());
        for (size_t i = 0; i < once.heads[h].entries.size(); ++i) {
            CHECK(once.heads[h].entries[i].position == twice.heads[h].entries[i].position);
        }
    }
}

TEST_CASE("retained_attention_mass: hand examples") {
    Vector row(3);
    row << 0.5, 0.3, 0.2;
    CHECK(zigzag::retained_attention_mass(row, {0, 1}) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(zigzag::retained_attention_mass(row, {0, 1, 2}) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(zigzag::retained_attention_mass(row, {}) == 0.0);
    CHECK_THROWS_AS(zigzag::retained_attention_mass(row, {3}), zigzag::ShapeError);
}

TEST_CASE("retained_attention_mass: top-k beats every other k-subset") {
    // Exhaustive subset oracle over n <= 12.
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 5 + static_cast<int>(rng() % 8);  // 5..12
        Vector row = random_distribution(rng, n);
        const int k = 1 + static_cast<int>(rng() % n);
        std::vector<int> top = zigzag::top_k_indices(row, k);
        const double top_mass = zigzag::retained_attention_mass(row, top);
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            if (std::popcount(mask) != k) continue;
            CHECK(top_mass >= subset_mass(row, mask) - 1e-12);
        }
    }
}

TEST_CASE("retained_attention_mass: monotone under nested kept sets") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 4 + static_cast<int>(rng() % 9);
        Vector row = random_distribution(rng, n);
        std::vector<int> small, large;
        for (int i = 0; i < n; ++i) {
            const bool in_large = (rng() % 2) == 0;
            if (in_large) {
                large.push_back(i);
                if ((rng() % 2) == 0) small.push_back(i);
            }
        }
        CHECK(zigzag::retained_attention_mass(row, small) <=
              zigzag::retained_attention_mass(row, large) + 1e-15);
    }
}
