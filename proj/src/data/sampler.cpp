#include "advunlearn/data/sampler.hpp"

#include <algorithm>

#include "advunlearn/errors.hpp"

namespace advunlearn {

CyclicSampler::CyclicSampler(IndexList pool, std::uint64_t seed) : pool_(std::move(pool)), seed_(seed) {
    if (pool_.empty()) {
        throw ConfigError("cannot sample from an empty index pool");
    }
    reshuffle();
}

void CyclicSampler::reshuffle() {
    Rng rng(derive_seed(seed_, cycle_++));
    std::shuffle(pool_.begin(), pool_.end(), rng);
    pos_ = 0;
}

IndexList CyclicSampler::next(std::size_t count) {
    IndexList out;
    out.reserve(count);
    while (out.size() < count) {
        if (pos_ == pool_.size()) {
            reshuffle();
        }
        out.push_back(pool_[pos_++]);
    }
    return out;
}

std::vector<IndexList> shuffled_batches(const IndexList& pool, std::size_t batch_size, std::uint64_t seed) {
    if (batch_size == 0) {
        throw ConfigError("batch size must be positive");
    }
    IndexList order = pool;
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<IndexList> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(order.size(), i + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

}  // namespace advunlearn
