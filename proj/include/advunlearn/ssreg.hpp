#pragma once

#include <cstddef>

#include "advunlearn/nn/tensor.hpp"

namespace advunlearn {

inline constexpr double kDefaultSsLambda = 5e-3;

/// Normalized cross-correlation between two equally sized feature batches.
struct CrossCorr {
    Matrix c;  // D x D
    std::size_t batch = 0;
};

/// Centers each column within its own batch, then
///   C_ij = sum_b f_bi v_bj / (||f_:i|| * ||v_:j|| + 1e-12).
/// Throws ShapeError unless both batches are B x D with B >= 2. Logs a
/// warning when a column has zero variance.
CrossCorr cross_correlation(const Matrix& z_f, const Matrix& z_v);

/// sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2. Throws ConfigError for lambda < 0.
double ss_loss(const CrossCorr& corr, double lambda = kDefaultSsLambda);

struct SsLossResult {
    double value = 0.0;
    CrossCorr corr;
    Matrix d_z_f;  // gradient w.r.t. the raw (uncentered) forget features
    Matrix d_z_v;
};

/// Loss and its gradient with respect to both raw feature batches, through
/// centering and normalization.
SsLossResult ss_loss_with_grad(const Matrix& z_f, const Matrix& z_v, double lambda = kDefaultSsLambda);

}  // namespace advunlearn
