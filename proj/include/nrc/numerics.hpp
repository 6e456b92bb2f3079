#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nrc/matrix.hpp"

namespace nrc {

/// Floor on vector norms in cosine similarity. Zero vectors end up with
/// similarity 0 to everything.
inline constexpr double kNormFloor = 1e-12;

/// Floor applied to probabilities before taking logarithms.
inline constexpr double kProbFloor = 1e-12;

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& logits);

double dot(std::span<const double> a, std::span<const double> b);

/// a.b / (max(|a|, eps) * max(|b|, eps)), clamped to [-1, 1].
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Combines a precomputed dot product and the two (unfloored) norms exactly
/// as cosine_similarity does, so callers that cache norms get bit-identical
/// results.
double cosine_from_parts(double dot_ab, double norm_a, double norm_b) noexcept;

/// L2 norm of every row, accumulated in the same order as cosine_similarity.
std::vector<double> row_norms(const Matrix& m);

/// Central-difference gradient of `f` at `theta`.
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> theta, double step);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace nrc
