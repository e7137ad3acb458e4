#include "advunlearn/nn/attention.hpp"

#include <cmath>

#include "advunlearn/errors.hpp"

namespace advunlearn {

void AttentionConfig::validate() const {
    if (num_layers == 0 || num_heads == 0 || model_dim == 0) {
        throw ConfigError("attention layers, heads and model_dim must be positive");
    }
    if (model_dim % num_heads != 0) {
        throw ConfigError("model_dim " + std::to_string(model_dim) +
                          " is not divisible by num_heads " + std::to_string(num_heads));
    }
}

AttentionStack::AttentionStack(ParamStore& store, const std::string& prefix,
                               const AttentionConfig& cfg, Rng& rng)
    : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg.model_dim;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const std::string p = prefix + ".layer" + std::to_string(l);
        Block b;
        b.wq = Dense(store, p + ".query", d, d, rng);
        b.wk = Dense(store, p + ".key", d, d, rng);
        b.wv = Dense(store, p + ".value", d, d, rng);
        b.wo = Dense(store, p + ".out", d, d, rng);
        if (cfg.feed_forward) {
            b.ff1 = Dense(store, p + ".ff1", d, d, rng);
            b.ff2 = Dense(store, p + ".ff2", d, d, rng);
        }
        blocks_.push_back(b);
    }
}

Matrix AttentionStack::forward(const ParamStore& store, const Matrix& tokens, std::size_t seq_len,
                               Cache* cache) const {
    const auto d = static_cast<Eigen::Index>(cfg_.model_dim);
    if (tokens.cols() != d) {
        throw ShapeError("token dim " + std::to_string(tokens.cols()) + " != model_dim " +
                         std::to_string(d));
    }
    const auto T = static_cast<Eigen::Index>(seq_len);
    if (T == 0 || tokens.rows() % T != 0) {
        throw ShapeError("token rows not a multiple of seq_len");
    }
    const Eigen::Index batch = tokens.rows() / T;
    const auto H = static_cast<Eigen::Index>(cfg_.num_heads);
    const Eigen::Index dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    if (cache) {
        cache->layers.assign(blocks_.size(), {});
    }
    Matrix x = tokens;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const Block& b = blocks_[l];
        Matrix q = b.wq.forward(store, x);
        Matrix k = b.wk.forward(store, x);
        Matrix v = b.wv.forward(store, x);
        Matrix heads(x.rows(), d);
        std::vector<Matrix> attn;
        if (cache) {
            attn.reserve(static_cast<std::size_t>(batch * H));
        }
        for (Eigen::Index s = 0; s < batch; ++s) {
            for (Eigen::Index h = 0; h < H; ++h) {
                auto qs = q.block(s * T, h * dh, T, dh);
                auto ks = k.block(s * T, h * dh, T, dh);
                auto vs = v.block(s * T, h * dh, T, dh);
                Matrix a = softmax_rows((qs * ks.transpose()) * scale);
                heads.block(s * T, h * dh, T, dh).noalias() = a * vs;
                if (cache) {
                    attn.push_back(std::move(a));
                }
            }
        }
        Matrix mid = x + b.wo.forward(store, heads);
        Matrix out;
        Matrix ffn_pre;
        if (cfg_.feed_forward) {
            ffn_pre = b.ff1.forward(store, mid);
            out = mid + b.ff2.forward(store, relu(ffn_pre));
        } else {
            out = mid;
        }
        if (cache) {
            auto& lc = cache->layers[l];
            lc.input = std::move(x);
            lc.q = std::move(q);
            lc.k = std::move(k);
            lc.v = std::move(v);
            lc.attn = std::move(attn);
            lc.heads = std::move(heads);
            lc.mid = mid;
            lc.ffn_pre = std::move(ffn_pre);
        }
        x = std::move(out);
    }
    return x;
}

Matrix AttentionStack::backward(ParamStore& store, const Cache& cache, const Matrix& d_out,
                                std::size_t seq_len) const {
    const auto d = static_cast<Eigen::Index>(cfg_.model_dim);
    const auto T = static_cast<Eigen::Index>(seq_len);
    const auto H = static_cast<Eigen::Index>(cfg_.num_heads);
    const Eigen::Index dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix dx = d_out;
    for (std::size_t li = blocks_.size(); li-- > 0;) {
        const Block& b = blocks_[li];
        const LayerCache& lc = cache.layers.at(li);
        const Eigen::Index batch = lc.input.rows() / T;

        Matrix d_mid = dx;
        if (cfg_.feed_forward) {
            const Matrix hidden = relu(lc.ffn_pre);
            Matrix d_hidden = b.ff2.backward(store, hidden, dx);
            d_mid += b.ff1.backward(store, lc.mid, relu_backward(lc.ffn_pre, d_hidden));
        }
        Matrix d_in = d_mid;
        const Matrix d_heads = b.wo.backward(store, lc.heads, d_mid);

        Matrix dq(lc.q.rows(), d), dk(lc.k.rows(), d), dv(lc.v.rows(), d);
        for (Eigen::Index s = 0; s < batch; ++s) {
            for (Eigen::Index h = 0; h < H; ++h) {
                const Matrix& a = lc.attn[static_cast<std::size_t>(s * H + h)];
                auto qs = lc.q.block(s * T, h * dh, T, dh);
                auto ks = lc.k.block(s * T, h * dh, T, dh);
                auto vs = lc.v.block(s * T, h * dh, T, dh);
                auto dos = d_heads.block(s * T, h * dh, T, dh);
                const Matrix da = dos * vs.transpose();
                dv.block(s * T, h * dh, T, dh).noalias() = a.transpose() * dos;
                const Matrix ds = softmax_rows_backward(a, da) * scale;
                dq.block(s * T, h * dh, T, dh).noalias() = ds * ks;
                dk.block(s * T, h * dh, T, dh).noalias() = ds.transpose() * qs;
            }
        }
        d_in += b.wq.backward(store, lc.input, dq);
        d_in += b.wk.backward(store, lc.input, dk);
        d_in += b.wv.backward(store, lc.input, dv);
        dx = std::move(d_in);
    }
    return dx;
}

Matrix mhsa_forward(const Matrix& tokens, std::size_t seq_len, const AttentionStack& stack,
                    const ParamStore& params) {
    return stack.forward(params, tokens, seq_len, nullptr);
}

}  // namespace advunlearn
