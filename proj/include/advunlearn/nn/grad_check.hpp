#pragma once

#include <cstddef>
#include <functional>

#include "advunlearn/nn/param_store.hpp"

namespace advunlearn {

/// Loss callback for grad_check: returns the loss at the store's current values
/// and accumulates its analytic gradient into store.grads().
using LossFn = std::function<double(ParamStore&)>;

/// Max over checked coordinates of |analytic - central difference| /
/// max(1, |central difference|). `max_coords` > 0 checks a deterministic subset
/// spread round-robin over every entry; 0 checks all. Throws ConfigError for eps
/// outside [1e-7, 1e-3] and NumericError if the loss is non-finite.
/// Values are restored on return; gradients are left holding the analytic gradient.
double grad_check(const LossFn& loss_fn, ParamStore& params, double eps = 1e-6,
                  std::size_t max_coords = 0);

}  // namespace advunlearn
