#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advunlearn/nn/tensor.hpp"

namespace advunlearn {

/// One named tensor inside a ParamStore. Values live in the store's flat
/// buffer at [offset, offset + size).
struct ParamEntry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    /// Weights are prunable, biases are not.
    bool prunable = true;
};

/// Flat storage for all parameters of one model, with a gradient buffer of
/// identical layout and an optional sparsity mask honored by the optimizers.
class ParamStore {
public:
    using Id = std::size_t;

    /// Registers a zero-initialized tensor. Throws ConfigError on duplicate names.
    Id add(std::string name, std::vector<std::size_t> shape, bool prunable = true);

    std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
    std::span<const ParamEntry> entries() const { return entries_; }
    const ParamEntry& entry(Id id) const { return entries_.at(id); }
    std::optional<Id> find(const std::string& name) const;

    Vector& values() { return values_; }
    const Vector& values() const { return values_; }
    Vector& grads() { return grads_; }
    const Vector& grads() const { return grads_; }

    /// 2-D views; 1-D entries are viewed as a single row.
    MatrixMap matrix(Id id);
    ConstMatrixMap matrix(Id id) const;
    MatrixMap grad_matrix(Id id);

    void zero_grad() { grads_.setZero(); }

    /// Registers a mask (one byte per parameter, 0 = pruned). Throws ConfigError
    /// on a length mismatch. Registered masks are applied by every optimizer step.
    void set_mask(std::vector<std::uint8_t> mask);
    void clear_mask() { mask_.reset(); }
    const std::optional<std::vector<std::uint8_t>>& mask() const { return mask_; }

    /// FNV-1a over the raw bytes of the value buffer.
    std::uint64_t checksum() const;

    /// Same names, shapes and layout.
    bool same_layout(const ParamStore& other) const;

private:
    std::vector<ParamEntry> entries_;
    Vector values_;
    Vector grads_;
    std::optional<std::vector<std::uint8_t>> mask_;
};

}  // namespace advunlearn
