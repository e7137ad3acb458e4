#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "advunlearn/nn/param_store.hpp"

namespace advunlearn {

/// Sign convention for a step: descend minimizes the loss whose gradient is in
/// the store, ascend maximizes it.
enum class StepDirection { descend, ascend };

/// Heavy-ball SGD: v <- mu*v + g, theta <- theta -/+ lr*v.
class Sgd {
public:
    Sgd(double lr, double momentum = 0.9);

    /// Uses `mask` when given, else the store's registered mask. Masked
    /// positions have their gradient and momentum discarded and stay exactly 0.
    void step(ParamStore& params, std::optional<std::span<const std::uint8_t>> mask = std::nullopt,
              StepDirection dir = StepDirection::descend);

    double lr() const { return lr_; }
    void set_lr(double lr);
    double momentum() const { return momentum_; }
    std::uint64_t steps() const { return steps_; }
    const Vector& velocity() const { return velocity_; }

private:
    double lr_;
    double momentum_;
    std::uint64_t steps_ = 0;
    Vector velocity_;
};

/// Adaptive-moment optimizer with bias correction.
class Adam {
public:
    explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(ParamStore& params, StepDirection dir = StepDirection::descend);

    double lr() const { return lr_; }
    std::uint64_t steps() const { return steps_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t steps_ = 0;
    Vector m_, v_;
};

}  // namespace advunlearn
