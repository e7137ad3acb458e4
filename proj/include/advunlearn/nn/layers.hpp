#pragma once

#include <cstddef>
#include <string>

#include "advunlearn/nn/param_store.hpp"

namespace advunlearn {

/// Fully connected layer y = x W + b with W stored as [in, out].
class Dense {
public:
    Dense() = default;
    /// Registers "<name>.weight" and "<name>.bias" in `store`; weights uniform in
    /// +-sqrt(6 / (in + out)), bias zero.
    Dense(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

    Matrix forward(const ParamStore& store, const Matrix& x) const;
    /// Accumulates dW, db into the store's gradient buffer; returns dL/dx.
    Matrix backward(ParamStore& store, const Matrix& x, const Matrix& dy) const;

    std::size_t in_dim() const { return in_; }
    std::size_t out_dim() const { return out_; }
    ParamStore::Id weight_id() const { return w_; }
    ParamStore::Id bias_id() const { return b_; }

private:
    std::size_t in_ = 0, out_ = 0;
    ParamStore::Id w_ = 0, b_ = 0;
};

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

/// dL/dx for y = relu(pre).
inline Matrix relu_backward(const Matrix& pre, const Matrix& dy) {
    return (pre.array() > 0.0).select(dy, 0.0);
}

}  // namespace advunlearn
