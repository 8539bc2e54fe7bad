// Copyright (C) 2026 ZigZagKV Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace zigzag {

// Dense 64-bit types. Everything downstream (attention maps, projections,
// score vectors) is expressed over these two aliases.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error hierarchy. Every failure the library raises derives from Error so
// callers can catch broadly; the subtypes exist so tests and the CLI can
// tell user mistakes apart from data problems.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Dimension mismatches (matmul operands, row lengths, decision vs cache shape).
struct ShapeError : Error {
    using Error::Error;
};

// Degenerate numeric input: all-masked softmax rows, zero vectors in cosine,
// rows that do not sum to one where a distribution is required.
struct ValueError : Error {
    using Error::Error;
};

// Invalid configuration: bad model dims, budgets incompatible with the window,
// out-of-range policy parameters.
struct ConfigError : Error {
    using Error::Error;
};

// Budget allocation cannot satisfy its feasibility constraints.
struct AllocationError : Error {
    using Error::Error;
};

// Cache misuse: position collisions on append, evicting unknown positions.
struct CacheError : Error {
    using Error::Error;
};

// Trace or report file problems: unreadable, wrong version, failed validation.
struct IoError : Error {
    using Error::Error;
};

// Operation requested on a source that cannot support it (for example the
// output-similarity scan on an attention trace with no model behind it).
struct CapabilityError : Error {
    using Error::Error;
};

/// Checked matrix product. Throws ShapeError when inner dimensions differ.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Row-wise softmax with max-subtraction. Entries of -inf are legal and map
/// to exactly 0 (the causal-mask idiom); a row that is entirely -inf throws
/// ValueError. Every output row sums to 1 and is NaN/Inf free.
Matrix softmax_rows(const Matrix& m);

/// Cosine similarity of two equal-length vectors, clamped to [-1, 1].
/// Throws ShapeError on length mismatch, ValueError if either norm is 0.
double cosine_similarity(const Vector& u, const Vector& v);

/// Indices of the k largest entries of `scores`. Ties break toward the lower
/// index (the earlier token wins) and the result is sorted ascending, so the
/// selection is fully deterministic. k > size returns all indices; k == 0
/// returns empty. Throws ValueError for k < 0.
std::vector<int> top_k_indices(const Vector& scores, int k);

}  // namespace zigzag
