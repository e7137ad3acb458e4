#include "advunlearn/nn/optim.hpp"

#include <cmath>
#include <string>

#include "advunlearn/errors.hpp"

namespace advunlearn {

Sgd::Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
    if (!(lr > 0.0)) {
        throw ConfigError("SGD learning rate must be positive");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
        throw ConfigError("SGD momentum must lie in [0, 1)");
    }
}

void Sgd::set_lr(double lr) {
    if (!(lr > 0.0)) {
        throw ConfigError("SGD learning rate must be positive");
    }
    lr_ = lr;
}

void Sgd::step(ParamStore& params, std::optional<std::span<const std::uint8_t>> mask,
               StepDirection dir) {
    const auto n = static_cast<Eigen::Index>(params.size());
    if (velocity_.size() != n) {
        velocity_ = Vector::Zero(n);
    }
    std::span<const std::uint8_t> bits;
    if (mask) {
        bits = *mask;
    } else if (params.mask()) {
        bits = *params.mask();
    }
    if (!bits.empty() && static_cast<Eigen::Index>(bits.size()) != n) {
        throw ConfigError("mask length " + std::to_string(bits.size()) +
                          " does not match parameter count " + std::to_string(n));
    }
    const double sign = dir == StepDirection::descend ? -1.0 : 1.0;
    Vector& theta = params.values();
    const Vector& g = params.grads();
    velocity_ = momentum_ * velocity_ + g;
    if (!bits.empty()) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (bits[static_cast<std::size_t>(i)] == 0) {
                velocity_[i] = 0.0;
            }
        }
    }
    theta += (sign * lr_) * velocity_;
    if (!bits.empty()) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (bits[static_cast<std::size_t>(i)] == 0) {
                theta[i] = 0.0;
            }
        }
    }
    ++steps_;
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0.0)) {
        throw ConfigError("Adam learning rate must be positive");
    }
}

void Adam::step(ParamStore& params, StepDirection dir) {
    const auto n = static_cast<Eigen::Index>(params.size());
    if (m_.size() != n) {
        m_ = Vector::Zero(n);
        v_ = Vector::Zero(n);
    }
    ++steps_;
    const Vector& g = params.grads();
    m_ = beta1_ * m_ + (1.0 - beta1_) * g;
    v_ = beta2_ * v_ + (1.0 - beta2_) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    const double sign = dir == StepDirection::descend ? -1.0 : 1.0;
    params.values().array() +=
        sign * lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
    if (const auto& mask = params.mask()) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if ((*mask)[static_cast<std::size_t>(i)] == 0) {
                params.values()[i] = 0.0;
            }
        }
    }
}

}  // namespace advunlearn
