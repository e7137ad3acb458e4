#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "advunlearn/nn/layers.hpp"

namespace advunlearn {

struct AttentionConfig {
    std::size_t num_layers = 3;
    std::size_t num_heads = 4;
    std::size_t model_dim = 64;
    /// Position-wise ReLU feed-forward sublayer (width = model_dim) after each
    /// attention sublayer, both with residual connections.
    bool feed_forward = true;

    void validate() const;
};

/// Stack of residual multi-head self-attention blocks without positional
/// encoding. Token batches are stored as (batch * seq_len) x model_dim, sample-major.
class AttentionStack {
public:
    struct LayerCache {
        Matrix input;
        Matrix q, k, v;
        std::vector<Matrix> attn;  // [sample * heads + head], seq_len x seq_len
        Matrix heads;              // concatenated head outputs
        Matrix mid;                // after attention residual
        Matrix ffn_pre;
    };
    struct Cache {
        std::vector<LayerCache> layers;
    };

    AttentionStack() = default;
    AttentionStack(ParamStore& store, const std::string& prefix, const AttentionConfig& cfg, Rng& rng);

    /// Fills `cache` when non-null (needed for backward).
    Matrix forward(const ParamStore& store, const Matrix& tokens, std::size_t seq_len,
                   Cache* cache = nullptr) const;
    /// Accumulates parameter gradients; returns dL/dtokens.
    Matrix backward(ParamStore& store, const Cache& cache, const Matrix& d_out,
                    std::size_t seq_len) const;

    const AttentionConfig& config() const { return cfg_; }

private:
    struct Block {
        Dense wq, wk, wv, wo, ff1, ff2;
    };
    AttentionConfig cfg_;
    std::vector<Block> blocks_;
};

/// One self-contained pass through an attention stack whose parameters live in `params`.
Matrix mhsa_forward(const Matrix& tokens, std::size_t seq_len, const AttentionStack& stack,
                    const ParamStore& params);

}  // namespace advunlearn
