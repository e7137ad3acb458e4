#include "advunlearn/defender.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "advunlearn/errors.hpp"

namespace advunlearn {

DefenderModel::DefenderModel(const DefenderArch& arch, std::uint64_t seed) : arch_(arch) {
    if (arch.input_dim == 0 || arch.feature_dim == 0 || arch.num_classes < 2) {
        throw ConfigError("defender needs input_dim > 0, feature_dim > 0 and at least 2 classes");
    }
    Rng rng(seed);
    std::size_t in = arch.input_dim;
    std::vector<std::size_t> widths = arch.hidden;
    widths.push_back(arch.feature_dim);
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (widths[i] == 0) {
            throw ConfigError("defender layer widths must be positive");
        }
        encoder_.emplace_back(params_, "encoder" + std::to_string(i), in, widths[i], rng);
        in = widths[i];
    }
    head_ = Dense(params_, "head", arch.feature_dim, static_cast<std::size_t>(arch.num_classes), rng);
}

DefenderModel::Pass DefenderModel::forward_pass(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != arch_.input_dim) {
        throw ShapeError("defender expects input dim " + std::to_string(arch_.input_dim) + ", got " +
                         std::to_string(x.cols()));
    }
    if (!x.allFinite()) {
        throw NumericError("defender input contains non-finite values");
    }
    Pass p;
    p.layer_inputs.reserve(encoder_.size());
    p.pre_acts.reserve(encoder_.size());
    Matrix h = x;
    for (const Dense& layer : encoder_) {
        p.layer_inputs.push_back(h);
        p.pre_acts.push_back(layer.forward(params_, h));
        h = relu(p.pre_acts.back());
    }
    p.features = std::move(h);
    p.logits = head_.forward(params_, p.features);
    p.probs = softmax_rows(p.logits);
    return p;
}

Matrix DefenderModel::features(const Matrix& x) const { return forward_pass(x).features; }

Matrix DefenderModel::head(const Matrix& features) const { return head_.forward(params_, features); }

void DefenderModel::backward(const Pass& pass, const Matrix& d_logits, const Matrix* d_features) {
    Matrix d = head_.backward(params_, pass.features, d_logits);
    if (d_features) {
        d += *d_features;
    }
    for (std::size_t i = encoder_.size(); i-- > 0;) {
        d = encoder_[i].backward(params_, pass.layer_inputs[i], relu_backward(pass.pre_acts[i], d));
    }
}

double ce_loss_from_probs(const Matrix& probs, std::span<const int> labels) {
    if (static_cast<std::size_t>(probs.rows()) != labels.size() || labels.empty()) {
        throw ShapeError("ce_loss: batch and label counts differ or are zero");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= probs.cols()) {
            throw ShapeError("ce_loss: label " + std::to_string(y) + " out of range");
        }
        total -= std::log(std::max(probs(static_cast<Eigen::Index>(i), y), kProbFloor));
    }
    return total / static_cast<double>(labels.size());
}

Matrix ce_logit_grad(const Matrix& probs, std::span<const int> labels) {
    Matrix g = probs;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        g(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
    }
    return g / static_cast<double>(labels.size());
}

double ce_loss(DefenderModel& model, const Matrix& x, std::span<const int> labels, bool accumulate_grad) {
    const auto pass = model.forward_pass(x);
    const double loss = ce_loss_from_probs(pass.probs, labels);
    if (accumulate_grad) {
        model.backward(pass, ce_logit_grad(pass.probs, labels));
    }
    return loss;
}

}  // namespace advunlearn
