#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "advunlearn/data/dataset.hpp"
#include "advunlearn/defender.hpp"
#include "advunlearn/nn/grad_check.hpp"
#include "advunlearn/nn/optim.hpp"

namespace advunlearn {

struct TrainCfg {
    double lr = 0.1;
    double momentum = 0.9;
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;  // batch order; epoch e uses derive_seed(seed, e)
};

/// zero_grad, CE forward/backward on one batch, optimizer step. Returns the CE.
/// The unlearning engine performs the same sequence when its extra terms vanish.
double ce_step(DefenderModel& model, Sgd& opt, const LabeledDataset& data, const IndexList& batch);

/// One pass over `pool` in seeded shuffled batches. Returns the mean batch CE.
double ce_epoch(DefenderModel& model, Sgd& opt, const LabeledDataset& data, const IndexList& pool,
                std::size_t batch_size, std::uint64_t epoch_seed);

/// cfg.epochs of CE descent from the model's current parameters.
void train_epochs(DefenderModel& model, const LabeledDataset& data, const IndexList& pool, const TrainCfg& cfg);

/// Fresh initialization from `init_seed`, then train_epochs on `pool`.
DefenderModel train_model(const DefenderArch& arch, const LabeledDataset& data, const IndexList& pool,
                          const TrainCfg& cfg, std::uint64_t init_seed);

enum class BaselineMethod { retrain, ft, ga, ff, iu };

std::string to_string(BaselineMethod m);
BaselineMethod baseline_from_string(const std::string& s);

struct BaselineConfig {
    TrainCfg retrain{0.1, 0.9, 30, 64, 0};
    TrainCfg finetune{0.01, 0.9, 10, 64, 0};
    TrainCfg ascent{0.01, 0.9, 5, 64, 0};
    double ff_scale = 0.1;
    double ff_damping = 1e-8;
    double iu_damping = 1e-3;

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
};

/// Gold standard: fresh model trained on the retain set only.
DefenderModel retrain(const DefenderArch& arch, const LabeledDataset& data, const IndexList& retain,
                      const TrainCfg& cfg, std::uint64_t init_seed);

/// CE descent on the retain set starting from theta_0.
DefenderModel finetune(const DefenderModel& theta0, const LabeledDataset& data, const IndexList& retain,
                       const TrainCfg& cfg);

/// Loss above which gradient ascent is considered divergent.
inline constexpr double kAscentDivergence = 1e6;

/// zero_grad, evaluate `loss` (which accumulates gradients), ascend one step.
/// Returns the loss before the step.
double ascend_once(ParamStore& params, Sgd& opt, const LossFn& loss);

/// cfg.epochs passes of CE ascent over the forget set. Throws NumericError with
/// epoch/batch diagnostics if the loss exceeds kAscentDivergence or is non-finite.
DefenderModel gradient_ascent(const DefenderModel& theta0, const LabeledDataset& data, const IndexList& forget,
                              const TrainCfg& cfg);

/// Mean over samples of the squared per-sample gradient. `per_sample_grad(i, p)`
/// must accumulate the gradient of sample i's log-likelihood (or its negative)
/// into p's gradient buffer, which is zeroed before every call.
Vector diagonal_fisher(ParamStore& params, std::size_t n_samples,
                       const std::function<void(std::size_t, ParamStore&)>& per_sample_grad);

/// Diagonal empirical Fisher of the defender's log p(y|x) over data[idx].
/// Sample chunks are processed on ADVUNLEARN_THREADS workers; the reduction
/// order is fixed, so the result does not depend on the thread count.
Vector defender_fisher(const DefenderModel& model, const LabeledDataset& data, const IndexList& idx);

/// theta_i += scale * (F_i + damping)^(-1/4) * eps_i, eps ~ N(0, 1) from Rng(seed).
/// Positions masked out in the store stay zero.
void fisher_perturb(ParamStore& params, const Vector& fisher, double scale, double damping, std::uint64_t seed);

DefenderModel fisher_forget(const DefenderModel& theta0, const LabeledDataset& data, const IndexList& retain,
                            double scale, double damping, std::uint64_t seed);

/// theta += (1 / n) * solve(grad_sum); masked positions stay zero.
void influence_step(ParamStore& params, const Vector& grad_sum, std::size_t n,
                    const std::function<Vector(const Vector&)>& solve);

/// Influence removal of the forget set with the damped diagonal Fisher of the
/// full train pool as Hessian proxy: theta += (1/|D|) (F + damping)^-1 sum_f grad l.
DefenderModel influence_unlearn(const DefenderModel& theta0, const LabeledDataset& data, const IndexList& train,
                                const IndexList& forget, double damping);

}  // namespace advunlearn
