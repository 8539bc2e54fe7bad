// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0

#include "zigzag/budget.hpp"

#include "zigzag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace zigzag {

namespace {

// Largest-remainder (Hamilton) rounding of nonnegative reals whose exact sum
// is the integer `target`. Ties on the remainder go to the lower index so the
// result is deterministic; equal inputs round to a weakly decreasing pattern,
// which preserves the order of the real-valued sequence.
std::vector<int> largest_remainder(const std::vector<double>& raw, long long target) {
    const int count = static_cast<int>(raw.size());
    std::vector<int> out(count);
    std::vector<double> remainder(count);
    long long assigned = 0;
    for (int i = 0; i < count; ++i) {
        const double f = std::floor(raw[i]);
        out[i] = static_cast<int>(f);
        remainder[i] = raw[i] - f;
        assigned += out[i];
    }
    long long deficit = target - assigned;
    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
        return a < b;
    });
    for (int i = 0; i < count && deficit > 0; ++i, --deficit) {
        out[order[i]] += 1;
    }
    // Floating-point drift can leave a residue beyond the remainder pass;
    // settle it one unit at a time following the same preference order.
    int cursor = 0;
    while (deficit > 0) {
        out[order[cursor % count]] += 1;
        --deficit;
        ++cursor;
    }
    while (deficit < 0) {
        int victim = order[count - 1 - (cursor % count)];
        if (out[victim] > 0) {
            out[victim] -= 1;
            ++deficit;
        }
        ++cursor;
    }
    return out;
}

// Raise every budget to `floor_value`, stealing single units from donors that
// sit above the floor. The donor is always the layer with the smallest raw
// allocation still above the floor: any layer with an even smaller raw value
// is itself at or below the floor, so taking from this donor can never invert
// the (weak) ordering the raw values induce.
void enforce_floor(std::vector<int>& budgets, const std::vector<double>& raw, int floor_value) {
    const int count = static_cast<int>(budgets.size());
    for (int i = 0; i < count; ++i) {
        while (budgets[i] < floor_value) {
            int donor = -1;
            for (int j = 0; j < count; ++j) {
                if (budgets[j] > floor_value && (donor < 0 || raw[j] < raw[donor])) {
                    donor = j;
                }
            }
            if (donor < 0) {
                throw AllocationError("budget floor repair infeasible");
            }
            budgets[donor] -= 1;
            budgets[i] += 1;
        }
    }
}

}  // namespace

BudgetPlan uniform_plan(int B, int L) {
    if (B < 1 || L < 1) {
        throw ConfigError("uniform_plan: B and L must be >= 1");
    }
    BudgetPlan plan;
    plan.budgets.assign(L, B);
    plan.total = static_cast<long long>(B) * L;
    plan.scheme = BudgetScheme::Uniform;
    return plan;
}

BudgetPlan pyramid_plan(int B, int L, double min_ratio) {
    if (B < 1 || L < 1) {
        throw ConfigError("pyramid_plan: B and L must be >= 1");
    }
    if (!(min_ratio > 0.0) || min_ratio > 1.0) {
        throw ConfigError("pyramid_plan: min_ratio must be in (0, 1]");
    }
    const int b_min = std::max(1, static_cast<int>(std::llround(min_ratio * B)));
    if (static_cast<long long>(b_min) * L > static_cast<long long>(B) * L) {
        throw AllocationError("pyramid_plan: floor exceeds the total budget");
    }
    // b_max is chosen so the arithmetic series sums exactly to B*L.
    const int b_max = 2 * B - b_min;

    BudgetPlan plan;
    plan.scheme = BudgetScheme::Pyramid;
    plan.total = static_cast<long long>(B) * L;
    if (L == 1) {
        plan.budgets = {B};
        return plan;
    }
    std::vector<double> raw(L);
    const double step = static_cast<double>(b_max - b_min) / (L - 1);
    for (int l = 0; l < L; ++l) {
        raw[l] = b_max - step * l;
    }
    plan.budgets = largest_remainder(raw, plan.total);
    return plan;
}

UncertaintyProfile uncertainty_profile(const std::vector<double>& lmba) {
    if (lmba.empty()) {
        throw ValueError("uncertainty_profile: empty LMBA list");
    }
    double total = 0.0;
    for (double v : lmba) {
        if (v < 0.0 || !std::isfinite(v)) {
            throw ValueError("uncertainty_profile: LMBA values must be finite and >= 0");
        }
        total += v;
    }
    if (total == 0.0) {
        throw ValueError("uncertainty_profile: all LMBA values are zero");
    }
    UncertaintyProfile profile;
    profile.lmba = lmba;
    profile.uncertainty.resize(lmba.size());
    for (size_t i = 0; i < lmba.size(); ++i) {
        profile.uncertainty[i] = lmba[i] / total;
    }
    return profile;
}

BudgetPlan zigzag_plan(int B, int L, const UncertaintyProfile& profile, int B_bound) {
    if (B < 1 || L < 1) {
        throw ConfigError("zigzag_plan: B and L must be >= 1");
    }
    if (static_cast<int>(profile.uncertainty.size()) != L) {
        throw ConfigError("zigzag_plan: profile covers " +
                          std::to_string(profile.uncertainty.size()) + " layers, want " +
                          std::to_string(L));
    }
    if (B_bound < 0 || B_bound > B) {
        throw AllocationError("zigzag_plan: B_bound must lie in [0, B]");
    }

    std::vector<double> raw(L);
    for (int l = 0; l < L; ++l) {
        raw[l] = B_bound + static_cast<double>(B - B_bound) * L * profile.uncertainty[l];
    }
    BudgetPlan plan;
    plan.scheme = BudgetScheme::Bounded;
    plan.total = static_cast<long long>(B) * L;
    plan.budgets = largest_remainder(raw, plan.total);
    enforce_floor(plan.budgets, raw, std::max(1, B_bound));
    return plan;
}

}  // namespace zigzag
