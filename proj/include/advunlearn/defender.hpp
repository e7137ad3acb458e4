#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "advunlearn/nn/layers.hpp"
#include "advunlearn/nn/param_store.hpp"

namespace advunlearn {

struct DefenderArch {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden{128, 64};
    std::size_t feature_dim = 64;
    int num_classes = 0;
};

/// MLP classifier: encoder (dense + ReLU per layer, ending at feature_dim)
/// followed by a linear head to K logits and a softmax.
class DefenderModel {
public:
    /// Cached activations of one forward pass, consumed by backward().
    struct Pass {
        std::vector<Matrix> layer_inputs;  // input to each encoder layer
        std::vector<Matrix> pre_acts;      // pre-ReLU output of each encoder layer
        Matrix features;
        Matrix logits;
        Matrix probs;
    };

    DefenderModel() = default;
    DefenderModel(const DefenderArch& arch, std::uint64_t seed);

    /// Throws NumericError on non-finite input and ShapeError on a dim mismatch.
    Pass forward_pass(const Matrix& x) const;
    Matrix forward(const Matrix& x) const { return forward_pass(x).probs; }
    Matrix features(const Matrix& x) const;
    /// Logits of the head applied to features.
    Matrix head(const Matrix& features) const;

    /// Accumulates parameter gradients given dL/dlogits and, optionally, an
    /// extra dL/dfeatures term (e.g. from the feature regularizer).
    void backward(const Pass& pass, const Matrix& d_logits, const Matrix* d_features = nullptr);

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const DefenderArch& arch() const { return arch_; }
    int num_classes() const { return arch_.num_classes; }
    std::size_t input_dim() const { return arch_.input_dim; }

    /// Encoder layers followed by the head.
    std::span<const Dense> encoder_layers() const { return encoder_; }
    const Dense& head_layer() const { return head_; }

private:
    DefenderArch arch_;
    ParamStore params_;
    std::vector<Dense> encoder_;
    Dense head_;
};

/// Lower clamp applied to probabilities before taking logs.
inline constexpr double kProbFloor = 1e-12;

/// Mean over the batch of -log p_y. When `accumulate_grad`, adds the gradient
/// ((p - onehot(y)) / B through the network) into the model's gradient buffer.
double ce_loss(DefenderModel& model, const Matrix& x, std::span<const int> labels,
               bool accumulate_grad = true);

/// Same loss for precomputed probabilities.
double ce_loss_from_probs(const Matrix& probs, std::span<const int> labels);

/// (p - onehot(y)) / B.
Matrix ce_logit_grad(const Matrix& probs, std::span<const int> labels);

}  // namespace advunlearn
