#include "advunlearn/data/splits.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advunlearn/errors.hpp"

namespace advunlearn {

std::string to_string(ForgetKind kind) {
    return kind == ForgetKind::random_fraction ? "random" : "class_wise";
}

ForgetKind forget_kind_from_string(const std::string& s) {
    if (s == "random" || s == "random_fraction") {
        return ForgetKind::random_fraction;
    }
    if (s == "class_wise" || s == "classwise" || s == "class") {
        return ForgetKind::class_wise;
    }
    throw ConfigError("unknown forget scheme '" + s + "' (expected random or class_wise)");
}

namespace {

IndexList iota_list(std::size_t n) {
    IndexList v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

}  // namespace

SplitSet make_splits(const LabeledDataset& train_pool, const LabeledDataset& eval_pool,
                     const ForgetScheme& scheme) {
    if (eval_pool.size() == 0) {
        throw ConfigError("eval pool is empty");
    }
    if (train_pool.size() == 0) {
        throw ConfigError("train pool is empty");
    }
    SplitSet s;
    s.scheme = scheme;
    const std::size_t n = train_pool.size();
    std::vector<std::uint8_t> in_forget(n, 0);

    if (scheme.kind == ForgetKind::random_fraction) {
        if (!(scheme.fraction > 0.0 && scheme.fraction < 1.0)) {
            throw ConfigError("forget fraction must lie in (0, 1)");
        }
        const auto count = static_cast<std::size_t>(std::llround(scheme.fraction * static_cast<double>(n)));
        if (count == 0) {
            throw EvaluationError("forget set is empty (fraction too small for the pool)");
        }
        IndexList order = iota_list(n);
        Rng rng(derive_seed(scheme.seed, 1));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < count; ++i) {
            in_forget[order[i]] = 1;
        }
    } else {
        if (scheme.class_id < 0 || scheme.class_id >= train_pool.num_classes) {
            throw ConfigError("forget class " + std::to_string(scheme.class_id) + " outside [0, " +
                              std::to_string(train_pool.num_classes) + ")");
        }
        for (std::size_t i = 0; i < n; ++i) {
            in_forget[i] = train_pool.labels[i] == scheme.class_id ? 1 : 0;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        (in_forget[i] ? s.forget : s.retain).push_back(i);
    }
    if (s.forget.empty()) {
        throw EvaluationError("forget set is empty: class " + std::to_string(scheme.class_id) +
                              " does not occur in the train pool");
    }

    IndexList eval_order = iota_list(eval_pool.size());
    Rng rng(derive_seed(scheme.seed, 2));
    std::shuffle(eval_order.begin(), eval_order.end(), rng);
    const std::size_t n_val = (eval_order.size() + 1) / 2;
    s.validation.assign(eval_order.begin(), eval_order.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.test.assign(eval_order.begin() + static_cast<std::ptrdiff_t>(n_val), eval_order.end());
    std::sort(s.validation.begin(), s.validation.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

IndexList scored_test_indices(const SplitSet& splits, const LabeledDataset& eval_pool) {
    if (splits.scheme.kind != ForgetKind::class_wise) {
        return splits.test;
    }
    IndexList out;
    for (std::size_t i : splits.test) {
        if (eval_pool.labels.at(i) != splits.scheme.class_id) {
            out.push_back(i);
        }
    }
    return out;
}

}  // namespace advunlearn
