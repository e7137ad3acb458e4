#include "advunlearn/pruning.hpp"

#include <algorithm>
#include <cmath>

#include "advunlearn/errors.hpp"

namespace advunlearn {

std::size_t omp_keep_count(std::size_t prunable, double sparsity) {
    const double exact = (1.0 - sparsity) * static_cast<double>(prunable);
    const double snapped = std::round(exact);
    if (std::abs(exact - snapped) <= 1e-9 * std::max(1.0, exact)) {
        return static_cast<std::size_t>(snapped);
    }
    return static_cast<std::size_t>(std::ceil(exact));
}

SparsityMask omp_mask(const ParamStore& params, double sparsity) {
    if (!(sparsity >= 0.0 && sparsity < 1.0)) {
        throw ConfigError("sparsity must lie in [0, 1)");
    }
    SparsityMask mask;
    mask.sparsity = sparsity;
    mask.bits.assign(params.size(), 1);

    std::vector<std::size_t> candidates;
    for (const auto& e : params.entries()) {
        if (!e.prunable) {
            continue;
        }
        for (std::size_t i = 0; i < e.size; ++i) {
            candidates.push_back(e.offset + i);
        }
    }
    mask.prunable = candidates.size();
    mask.kept = omp_keep_count(candidates.size(), sparsity);

    const Vector& w = params.values();
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(w[static_cast<Eigen::Index>(a)]) > std::abs(w[static_cast<Eigen::Index>(b)]);
    });
    for (std::size_t r = mask.kept; r < candidates.size(); ++r) {
        mask.bits[candidates[r]] = 0;
    }
    return mask;
}

void apply_mask(ParamStore& params, const SparsityMask& mask) {
    if (mask.bits.size() != params.size()) {
        throw ConfigError("sparsity mask size does not match the parameter store");
    }
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if (mask.bits[i] == 0) {
            params.values()[static_cast<Eigen::Index>(i)] = 0.0;
        }
    }
    params.set_mask(mask.bits);
}

}  // namespace advunlearn
