#include "advunlearn/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "advunlearn/errors.hpp"

namespace advunlearn {

namespace {

std::vector<std::size_t> pick_coords(const ParamStore& params, std::size_t max_coords) {
    std::vector<std::size_t> coords;
    if (max_coords == 0 || max_coords >= params.size()) {
        coords.resize(params.size());
        for (std::size_t i = 0; i < coords.size(); ++i) {
            coords[i] = i;
        }
        return coords;
    }
    // Round-robin over entries with a stride inside each entry.
    const auto entries = params.entries();
    std::vector<std::size_t> cursor(entries.size(), 0);
    const std::size_t per_entry = std::max<std::size_t>(1, max_coords / entries.size());
    while (coords.size() < max_coords) {
        bool progressed = false;
        for (std::size_t e = 0; e < entries.size() && coords.size() < max_coords; ++e) {
            const std::size_t stride = std::max<std::size_t>(1, entries[e].size / per_entry);
            const std::size_t local = cursor[e] * stride;
            if (local < entries[e].size) {
                coords.push_back(entries[e].offset + local);
                ++cursor[e];
                progressed = true;
            }
        }
        if (!progressed) {
            break;
        }
    }
    return coords;
}

double checked_loss(const LossFn& loss_fn, ParamStore& params) {
    const double loss = loss_fn(params);
    if (!std::isfinite(loss)) {
        throw NumericError("grad_check: loss is not finite");
    }
    return loss;
}

}  // namespace

double grad_check(const LossFn& loss_fn, ParamStore& params, double eps, std::size_t max_coords) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) {
        throw ConfigError("grad_check eps must lie in [1e-7, 1e-3]");
    }
    params.zero_grad();
    checked_loss(loss_fn, params);
    const Vector analytic = params.grads();

    double worst = 0.0;
    Vector& theta = params.values();
    for (std::size_t c : pick_coords(params, max_coords)) {
        const auto i = static_cast<Eigen::Index>(c);
        const double saved = theta[i];
        theta[i] = saved + eps;
        params.zero_grad();
        const double up = checked_loss(loss_fn, params);
        theta[i] = saved - eps;
        params.zero_grad();
        const double down = checked_loss(loss_fn, params);
        theta[i] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    }
    params.grads() = analytic;
    return worst;
}

}  // namespace advunlearn
