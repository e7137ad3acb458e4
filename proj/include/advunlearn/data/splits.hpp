#pragma once

#include <cstdint>
#include <string>

#include "advunlearn/data/dataset.hpp"

namespace advunlearn {

enum class ForgetKind { random_fraction, class_wise };

std::string to_string(ForgetKind kind);
ForgetKind forget_kind_from_string(const std::string& s);

struct ForgetScheme {
    ForgetKind kind = ForgetKind::random_fraction;
    double fraction = 0.10;
    int class_id = 0;
    std::uint64_t seed = 0;
};

/// Index lists into a train pool (retain, forget) and an eval pool
/// (validation, test). All lists are sorted ascending.
struct SplitSet {
    IndexList retain;
    IndexList forget;
    IndexList validation;
    IndexList test;
    ForgetScheme scheme;
};

/// Random scheme: |forget| = round(fraction * N) drawn by seeded shuffle.
/// Class-wise: forget = every train index labelled class_id. The eval pool is
/// split 50/50 (validation gets the extra sample) by a seeded shuffle.
/// Throws ConfigError for an out-of-range fraction/class and EvaluationError
/// when the forget set would be empty.
SplitSet make_splits(const LabeledDataset& train_pool, const LabeledDataset& eval_pool,
                     const ForgetScheme& scheme);

/// Test indices used for TA: under class-wise forgetting the forgotten class is
/// excluded, otherwise the full test split.
IndexList scored_test_indices(const SplitSet& splits, const LabeledDataset& eval_pool);

}  // namespace advunlearn
