#pragma once

#include <cstdint>

#include "advunlearn/data/dataset.hpp"

namespace advunlearn {

/// Endless batches from a fixed pool: shuffles, hands out indices in order,
/// and reshuffles (with a derived seed) each time the pool is exhausted.
class CyclicSampler {
public:
    CyclicSampler(IndexList pool, std::uint64_t seed);

    IndexList next(std::size_t count);
    std::size_t pool_size() const { return pool_.size(); }

private:
    void reshuffle();

    IndexList pool_;
    std::uint64_t seed_;
    std::uint64_t cycle_ = 0;
    std::size_t pos_ = 0;
};

/// Seeded permutation of `pool` split into consecutive batches of
/// `batch_size` (the last one may be shorter).
std::vector<IndexList> shuffled_batches(const IndexList& pool, std::size_t batch_size, std::uint64_t seed);

}  // namespace advunlearn
