#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advunlearn/attacker.hpp"
#include "advunlearn/data/splits.hpp"
#include "advunlearn/defender.hpp"
#include "advunlearn/ssreg.hpp"

namespace advunlearn {

struct UnlearnConfig {
    double alpha = 0.9;
    double beta = 0.001;
    double lambda = kDefaultSsLambda;
    double eta_d = 0.01;
    double eta_a = 1e-4;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    std::size_t epochs = 50;
    ForgetKind scheme = ForgetKind::random_fraction;
    bool non_saturating = true;
    std::optional<std::size_t> alpha_cutoff_iters;
    std::size_t attacker_steps = 1;
    std::size_t pretrain_iters = 1000;
    SensitivityCfg sensitivity;
    AttentionConfig attention;
    /// Stop once the held-out attacker AUC sits in [0.48, 0.52] for three
    /// consecutive epochs while RA >= RA(theta_0) - 2.
    bool early_stop = false;
    /// Per-epoch UA/RA/TA and attacker AUC snapshots (costs one evaluation pass per epoch).
    bool record_metrics = true;
    std::optional<std::filesystem::path> checkpoint_dir;
    std::uint64_t seed = 0;

    /// Defaults for a scheme: class-wise gets lr 0.02 and a 30-iteration
    /// alpha cutoff; random gets 0.01 (dense) or 0.03 (sparse) and no cutoff.
    static UnlearnConfig defaults_for(ForgetKind scheme, bool sparse);

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
};

/// cfg.alpha before the cutoff (or always when there is none), 0 afterwards.
double alpha_schedule(std::size_t iter, const UnlearnConfig& cfg);

/// Adversarial part of the defender objective for paired attacker logits.
///   value: alpha * mean[log a_f + log(1 - a_v)]          (saturating)
///          alpha * mean[log a_v + log(1 - a_f)]          (non-saturating)
///   loss:  the quantity the defender minimizes; equals value for the
///          saturating form and -value for the label-flipped form.
/// Gradients are of `loss` with respect to the logits.
struct AdversarialTerm {
    double value = 0.0;
    double loss = 0.0;
    Vector d_logit_f;
    Vector d_logit_v;
};

AdversarialTerm defender_adversarial_term(const Vector& logit_f, const Vector& logit_v, double alpha,
                                          bool non_saturating);

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t iterations = 0;
    double alpha = 0.0;           // alpha in force at the epoch's last iteration
    double ce = 0.0;              // mean defender CE on retain batches
    std::optional<double> attacker_objective;  // mean attacker objective at its updates, if any ran
    double ss = 0.0;              // mean V_ss (0 when beta = 0)
    double defender_loss = 0.0;   // mean of ce + adversarial loss + beta * V_ss
    std::optional<double> attacker_auc;  // forget vs test, held out
    std::optional<double> ua, ra, ta;
};

struct RunHistory {
    std::vector<EpochRecord> epochs;
    bool stopped_early = false;

    std::string to_csv() const;
};

/// Per-iteration bookkeeping exposed to tests.
struct StepTrace {
    std::size_t iter = 0;
    double alpha = 0.0;
    double ce = 0.0;
    double adversarial = 0.0;  // defender-side adversarial loss (alpha included)
    double ss = 0.0;
    double defender_loss = 0.0;
};

/// Instrumentation hook: called with "attacker_step" / "defender_step" after
/// each update, and with the matching trace for defender steps.
using EngineObserver = std::function<void(std::string_view event, const StepTrace& trace)>;

/// Data a run needs beyond the models.
struct UnlearnData {
    const LabeledDataset* train_pool = nullptr;
    const LabeledDataset* eval_pool = nullptr;
    const SplitSet* splits = nullptr;
};

struct EngineState {
    DefenderModel defender;
    AttackerModel attacker;
    Sgd defender_opt;
    Adam attacker_opt;
    std::size_t iteration = 0;
};

/// Creates the attacker and both optimizers for a defender.
EngineState make_engine_state(const DefenderModel& defender, const UnlearnConfig& cfg);

/// One epoch of alternating updates over retain batches. Per iteration:
/// sample paired forget/validation batches, ascend the attacker, then descend
/// the defender on CE + adversarial loss + beta * V_ss with the updated
/// attacker. Throws NumericError naming a non-finite term.
EpochRecord unlearn_epoch(EngineState& state, const UnlearnData& data, const UnlearnConfig& cfg, std::size_t epoch,
                          const EngineObserver& observer = {});

struct UnlearnResult {
    DefenderModel model;
    AttackerModel attacker;
    RunHistory history;
};

/// Attacker pretraining (train pool vs validation) followed by cfg.epochs
/// epochs. epochs == 0 returns theta_0 unchanged.
UnlearnResult run_unlearning(const DefenderModel& theta0, const UnlearnData& data, const UnlearnConfig& cfg,
                             const EngineObserver& observer = {});

}  // namespace advunlearn
