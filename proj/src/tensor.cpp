// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0

#include "zigzag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace zigzag {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + ")");
    }
    return a * b;
}

Matrix softmax_rows(const Matrix& m) {
    if (m.cols() == 0) {
        throw ValueError("softmax_rows: matrix has no columns");
    }
    Matrix out(m.rows(), m.cols());
    const double neg_inf = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double row_max = m.row(r).maxCoeff();
        if (row_max == neg_inf) {
            throw ValueError("softmax_rows: row " + std::to_string(r) + " is entirely -inf");
        }
        // exp(-inf - row_max) is exactly 0, so masked entries stay exactly 0.
        Eigen::ArrayXd e = (m.row(r).array() - row_max).exp();
        out.row(r) = e / e.sum();
    }
    return out;
}

double cosine_similarity(const Vector& u, const Vector& v) {
    if (u.size() != v.size()) {
        throw ShapeError("cosine_similarity: length mismatch (" + std::to_string(u.size()) +
                         " vs " + std::to_string(v.size()) + ")");
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) {
        throw ValueError("cosine_similarity: undefined for a zero vector");
    }
    const double c = u.dot(v) / (nu * nv);
    return std::clamp(c, -1.0, 1.0);
}

std::vector<int> top_k_indices(const Vector& scores, int k) {
    if (k < 0) {
        throw ValueError("top_k_indices: k must be nonnegative");
    }
    const int n = static_cast<int>(scores.size());
    const int take = std::min(k, n);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // Order by score descending; equal scores keep the earlier token first.
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace zigzag
