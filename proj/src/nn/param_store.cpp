#include "advunlearn/nn/param_store.hpp"

#include <cstring>
#include <numeric>

#include "advunlearn/errors.hpp"

namespace advunlearn {

ParamStore::Id ParamStore::add(std::string name, std::vector<std::size_t> shape, bool prunable) {
    if (find(name)) {
        throw ConfigError("duplicate parameter name: " + name);
    }
    if (shape.empty() || shape.size() > 2) {
        throw ShapeError("parameter '" + name + "' must be 1-D or 2-D");
    }
    const std::size_t count =
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    ParamEntry e{std::move(name), std::move(shape), size(), count, prunable};
    const auto new_size = static_cast<Eigen::Index>(e.offset + count);
    values_.conservativeResize(new_size);
    grads_.conservativeResize(new_size);
    values_.tail(static_cast<Eigen::Index>(count)).setZero();
    grads_.tail(static_cast<Eigen::Index>(count)).setZero();
    if (mask_) {
        mask_->resize(e.offset + count, 1);
    }
    entries_.push_back(std::move(e));
    return entries_.size() - 1;
}

std::optional<ParamStore::Id> ParamStore::find(const std::string& name) const {
    for (Id i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

namespace {
std::pair<Eigen::Index, Eigen::Index> dims(const ParamEntry& e) {
    if (e.shape.size() == 1) {
        return {1, static_cast<Eigen::Index>(e.shape[0])};
    }
    return {static_cast<Eigen::Index>(e.shape[0]), static_cast<Eigen::Index>(e.shape[1])};
}
}  // namespace

MatrixMap ParamStore::matrix(Id id) {
    const auto& e = entries_.at(id);
    auto [r, c] = dims(e);
    return MatrixMap(values_.data() + e.offset, r, c);
}

ConstMatrixMap ParamStore::matrix(Id id) const {
    const auto& e = entries_.at(id);
    auto [r, c] = dims(e);
    return ConstMatrixMap(values_.data() + e.offset, r, c);
}

MatrixMap ParamStore::grad_matrix(Id id) {
    const auto& e = entries_.at(id);
    auto [r, c] = dims(e);
    return MatrixMap(grads_.data() + e.offset, r, c);
}

void ParamStore::set_mask(std::vector<std::uint8_t> mask) {
    if (mask.size() != size()) {
        throw ConfigError("mask has " + std::to_string(mask.size()) + " entries, store has " +
                          std::to_string(size()) + " parameters");
    }
    mask_ = std::move(mask);
}

std::uint64_t ParamStore::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(values_.data());
    const std::size_t n = size() * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

bool ParamStore::same_layout(const ParamStore& other) const {
    if (entries_.size() != other.entries_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name ||
            entries_[i].shape != other.entries_[i].shape) {
            return false;
        }
    }
    return true;
}

}  // namespace advunlearn
