// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace zigzag {

// mt19937_64 output is pinned by the standard, but uniform_real_distribution
// is not; drawing doubles from the top 53 bits keeps every stream
// bit-identical across standard libraries and platforms.
inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform draw from [lo, hi).
inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

// Uniform integer in [0, bound). Modulo bias is far below anything the
// desk-scale experiments can resolve, and the result stays portable.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    return rng() % bound;
}

}  // namespace zigzag
