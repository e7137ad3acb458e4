#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "advunlearn/nn/param_store.hpp"

namespace advunlearn {

struct SparsityMask {
    std::vector<std::uint8_t> bits;  // one per parameter; biases always 1
    double sparsity = 0.0;
    std::size_t prunable = 0;        // number of prunable weights
    std::size_t kept = 0;            // prunable weights kept
};

/// Number of prunable weights kept at a sparsity level: ceil((1 - s) * M),
/// robust to floating-point noise in (1 - s) * M.
std::size_t omp_keep_count(std::size_t prunable, double sparsity);

/// One-shot global magnitude pruning: keeps the largest-|w| prunable weights
/// across all layers, ties broken by lower flat index. Throws ConfigError for
/// sparsity outside [0, 1).
SparsityMask omp_mask(const ParamStore& params, double sparsity);

/// Zeroes pruned weights and registers the mask with the store so optimizer
/// steps keep them at zero. Throws ConfigError on a size mismatch.
void apply_mask(ParamStore& params, const SparsityMask& mask);

}  // namespace advunlearn
