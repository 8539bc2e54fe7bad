// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace zigzag {

enum class BudgetScheme { Uniform, Pyramid, Bounded };

// Per-layer integer budgets. Whatever the scheme, the total is exactly
// budget-per-layer-mean times layer count; integer rounding is repaired by
// largest-remainder apportionment.
struct BudgetPlan {
    std::vector<int> budgets;
    long long total = 0;
    BudgetScheme scheme = BudgetScheme::Uniform;
};

// Normalized per-layer uncertainty derived from LMBA values.
struct UncertaintyProfile {
    std::vector<double> lmba;
    std::vector<double> uncertainty;  // lmba / sum(lmba), sums to 1
};

/// Every layer gets B. Throws ConfigError for B < 1 or L < 1.
BudgetPlan uniform_plan(int B, int L);

/// Arithmetic sequence from B_max at layer 0 down to
/// B_min = max(1, round(min_ratio*B)) at layer L-1, rounded so the total is
/// exactly B*L and depth monotonicity is preserved. Throws ConfigError for
/// min_ratio outside (0, 1], AllocationError if the floor is infeasible.
BudgetPlan pyramid_plan(int B, int L, double min_ratio);

/// Normalize LMBA values into an uncertainty profile. Throws ValueError when
/// any value is negative or all are zero.
UncertaintyProfile uncertainty_profile(const std::vector<double>& lmba);

/// Bounded uncertainty allocation: real-valued
///   budget_l = B_bound + (B - B_bound) * L * uncertainty_l,
/// rounded by largest remainder so the total is exactly B*L and every budget
/// stays >= max(1, B_bound). B_bound = 0 is the unbounded variant. Throws
/// AllocationError for B_bound outside [0, B].
BudgetPlan zigzag_plan(int B, int L, const UncertaintyProfile& profile, int B_bound);

}  // namespace zigzag
