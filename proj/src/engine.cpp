#include "advunlearn/engine.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "advunlearn/baselines.hpp"
#include "advunlearn/data/sampler.hpp"
#include "advunlearn/errors.hpp"
#include "advunlearn/mia_eval.hpp"
#include "advunlearn/nn/checkpoint.hpp"

namespace advunlearn {

namespace {

constexpr std::size_t kAucSampleCap = 256;

void require(bool ok, const char* field, const char* what) {
    if (!ok) {
        throw ConfigError(std::string(field) + " " + what);
    }
}

void check_finite(double v, const char* term, std::size_t iter) {
    if (!std::isfinite(v)) {
        throw NumericError(fmt::format("non-finite {} at iteration {}", term, iter));
    }
}

IndexList head_of(const IndexList& idx, std::size_t cap) {
    return IndexList(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(std::min(cap, idx.size())));
}

struct PairBatch {
    Matrix x_f, x_v;
    std::vector<int> y_f, y_v;
};

}  // namespace

UnlearnConfig UnlearnConfig::defaults_for(ForgetKind scheme, bool sparse) {
    UnlearnConfig cfg;
    cfg.scheme = scheme;
    if (scheme == ForgetKind::class_wise) {
        cfg.eta_d = 0.02;
        cfg.alpha_cutoff_iters = 30;
    } else {
        cfg.eta_d = sparse ? 0.03 : 0.01;
    }
    return cfg;
}

void UnlearnConfig::validate() const {
    require(std::isfinite(alpha) && alpha >= 0.0, "alpha", "must be a finite value >= 0");
    require(std::isfinite(beta) && beta >= 0.0, "beta", "must be a finite value >= 0");
    require(std::isfinite(lambda) && lambda >= 0.0, "lambda", "must be a finite value >= 0");
    require(eta_d > 0.0, "eta_d", "must be positive");
    require(eta_a > 0.0, "eta_a", "must be positive");
    require(momentum >= 0.0 && momentum < 1.0, "momentum", "must lie in [0, 1)");
    require(batch_size >= 2, "batch_size", "must be at least 2");
    require(attacker_steps >= 1, "attacker_steps", "must be at least 1");
    require(sensitivity.n >= 1, "noise_draws", "must be at least 1");
    require(sensitivity.sigma >= 0.0, "noise_sigma", "must be nonnegative");
    attention.validate();
}

double alpha_schedule(std::size_t iter, const UnlearnConfig& cfg) {
    if (cfg.alpha_cutoff_iters && iter >= *cfg.alpha_cutoff_iters) {
        return 0.0;
    }
    return cfg.alpha;
}

AdversarialTerm defender_adversarial_term(const Vector& logit_f, const Vector& logit_v, double alpha,
                                          bool non_saturating) {
    AdversarialTerm t;
    if (!non_saturating) {
        const auto obj = attacker_loss(logit_f, logit_v);
        t.value = alpha * obj.value;
        t.loss = t.value;
        t.d_logit_f = alpha * obj.d_logit_f;
        t.d_logit_v = alpha * obj.d_logit_v;
    } else {
        // Roles swapped: mean[log a_v + log(1 - a_f)], maximized by the defender.
        const auto obj = attacker_loss(logit_v, logit_f);
        t.value = alpha * obj.value;
        t.loss = -t.value;
        t.d_logit_f = -alpha * obj.d_logit_v;
        t.d_logit_v = -alpha * obj.d_logit_f;
    }
    return t;
}

std::string RunHistory::to_csv() const {
    std::ostringstream out;
    out << "epoch,iterations,alpha,ce,attacker_objective,ss,defender_loss,attacker_auc,ua,ra,ta\n";
    auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{:.17g}", *v) : std::string(); };
    for (const auto& r : epochs) {
        out << fmt::format("{},{},{:.17g},{:.17g},{},{:.17g},{:.17g},{},{},{},{}\n", r.epoch, r.iterations, r.alpha,
                           r.ce, opt(r.attacker_objective), r.ss, r.defender_loss, opt(r.attacker_auc), opt(r.ua),
                           opt(r.ra), opt(r.ta));
    }
    return out.str();
}

EngineState make_engine_state(const DefenderModel& defender, const UnlearnConfig& cfg) {
    AttackerArch arch{defender.num_classes(), cfg.attention};
    return EngineState{defender, AttackerModel(arch, derive_seed(cfg.seed, 600)), Sgd(cfg.eta_d, cfg.momentum),
                       Adam(cfg.eta_a), 0};
}

EpochRecord unlearn_epoch(EngineState& state, const UnlearnData& data, const UnlearnConfig& cfg, std::size_t epoch,
                          const EngineObserver& observer) {
    if (!data.train_pool || !data.eval_pool || !data.splits) {
        throw ConfigError("unlearn_epoch: data handles are not set");
    }
    const LabeledDataset& train = *data.train_pool;
    const LabeledDataset& eval = *data.eval_pool;
    const SplitSet& splits = *data.splits;
    if (splits.forget.empty() || splits.validation.empty()) {
        throw EvaluationError("unlearn_epoch: forget and validation sets must be nonempty");
    }
    const int k = state.defender.num_classes();
    DefenderModel& defender = state.defender;
    AttackerModel& attacker = state.attacker;

    const auto batches = shuffled_batches(splits.retain, cfg.batch_size, derive_seed(cfg.seed, epoch));
    CyclicSampler f_sampler(splits.forget, derive_seed(cfg.seed, 200, epoch));
    CyclicSampler v_sampler(splits.validation, derive_seed(cfg.seed, 201, epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    double attacker_sum = 0.0;
    std::size_t attacker_count = 0;

    for (const auto& batch : batches) {
        const std::size_t iter = state.iteration;
        const double alpha_t = alpha_schedule(iter, cfg);
        const bool use_adv = alpha_t > 0.0;
        const bool use_ss = cfg.beta > 0.0;

        PairBatch pair;
        const IndexList f_idx = f_sampler.next(cfg.batch_size);
        const IndexList v_idx = v_sampler.next(cfg.batch_size);
        pair.x_f = train.rows(f_idx);
        pair.x_v = eval.rows(v_idx);
        pair.y_f = train.labels_at(f_idx);
        pair.y_v = eval.labels_at(v_idx);
        const auto pairs = static_cast<Eigen::Index>(f_idx.size());

        // Defender outputs before any update this iteration; reused by the
        // defender step since the defender does not change in between.
        std::optional<DefenderProbe> probe_f, probe_v;
        Matrix stacked;
        if (use_adv) {
            SensitivityCfg sens = cfg.sensitivity;
            sens.seed = derive_seed(cfg.seed, 300, iter);
            probe_f = probe_defender(defender, pair.x_f, sens);
            sens.seed = derive_seed(cfg.seed, 301, iter);
            probe_v = probe_defender(defender, pair.x_v, sens);
            const Matrix m_f = build_mia_batch(probe_f->clean.probs, probe_f->delta, pair.y_f);
            const Matrix m_v = build_mia_batch(probe_v->clean.probs, probe_v->delta, pair.y_v);
            stacked.resize(m_f.rows() + m_v.rows(), m_f.cols());
            stacked << m_f, m_v;

            for (std::size_t s = 0; s < cfg.attacker_steps; ++s) {
                attacker.params().zero_grad();
                const auto pass = attacker.forward_pass(stacked);
                const auto obj = attacker_loss(pass.logits.head(pairs), pass.logits.tail(pairs));
                check_finite(obj.value, "attacker objective", iter);
                Vector d_logits(stacked.rows());
                d_logits << obj.d_logit_f, obj.d_logit_v;
                attacker.backward(pass, d_logits);
                state.attacker_opt.step(attacker.params(), StepDirection::ascend);
                attacker_sum += obj.value;
                ++attacker_count;
                if (observer) {
                    observer("attacker_step", StepTrace{iter, alpha_t, 0.0, obj.value, 0.0, 0.0});
                }
            }
            attacker.params().zero_grad();
        }

        // Defender descent.
        defender.params().zero_grad();
        const auto y_r = train.labels_at(batch);
        StepTrace trace;
        trace.iter = iter;
        trace.alpha = alpha_t;
        trace.ce = ce_loss(defender, train.rows(batch), y_r);
        check_finite(trace.ce, "CE loss", iter);

        Matrix d_probs_f, d_delta_f, d_probs_v, d_delta_v;
        if (use_adv) {
            const auto pass = attacker.forward_pass(stacked);
            const auto term =
                defender_adversarial_term(pass.logits.head(pairs), pass.logits.tail(pairs), alpha_t, cfg.non_saturating);
            check_finite(term.loss, "adversarial term", iter);
            trace.adversarial = term.loss;
            Vector d_logits(stacked.rows());
            d_logits << term.d_logit_f, term.d_logit_v;
            const Matrix d_in = attacker.backward(pass, d_logits);
            attacker.params().zero_grad();
            d_probs_f = d_in.topRows(pairs).leftCols(k);
            d_delta_f = d_in.topRows(pairs).middleCols(k, k);
            d_probs_v = d_in.bottomRows(pairs).leftCols(k);
            d_delta_v = d_in.bottomRows(pairs).middleCols(k, k);
        }

        std::optional<SsLossResult> ss;
        std::optional<DefenderModel::Pass> pass_f, pass_v;
        if (use_ss) {
            if (!use_adv) {
                pass_f = defender.forward_pass(pair.x_f);
                pass_v = defender.forward_pass(pair.x_v);
            }
            const Matrix& z_f = use_adv ? probe_f->clean.features : pass_f->features;
            const Matrix& z_v = use_adv ? probe_v->clean.features : pass_v->features;
            ss = ss_loss_with_grad(z_f, z_v, cfg.lambda);
            check_finite(ss->value, "V_ss", iter);
            trace.ss = ss->value;
            ss->d_z_f *= cfg.beta;
            ss->d_z_v *= cfg.beta;
        }

        if (use_adv) {
            backward_probe(defender, *probe_f, d_probs_f, d_delta_f, use_ss ? &ss->d_z_f : nullptr);
            backward_probe(defender, *probe_v, d_probs_v, d_delta_v, use_ss ? &ss->d_z_v : nullptr);
        } else if (use_ss) {
            const Matrix zero = Matrix::Zero(pairs, k);
            defender.backward(*pass_f, zero, &ss->d_z_f);
            defender.backward(*pass_v, zero, &ss->d_z_v);
        }

        trace.defender_loss = trace.ce + trace.adversarial + cfg.beta * trace.ss;
        check_finite(trace.defender_loss, "defender loss", iter);
        state.defender_opt.step(defender.params());
        if (observer) {
            observer("defender_step", trace);
        }

        rec.ce += trace.ce;
        rec.ss += trace.ss;
        rec.defender_loss += trace.defender_loss;
        rec.alpha = alpha_t;
        ++rec.iterations;
        ++state.iteration;
    }

    if (rec.iterations > 0) {
        const auto n = static_cast<double>(rec.iterations);
        rec.ce /= n;
        rec.ss /= n;
        rec.defender_loss /= n;
    }
    if (attacker_count > 0) {
        rec.attacker_objective = attacker_sum / static_cast<double>(attacker_count);
    }

    if (cfg.record_metrics) {
        rec.ua = 100.0 - accuracy(defender, train, splits.forget);
        rec.ra = accuracy(defender, train, splits.retain);
        rec.ta = accuracy(defender, eval, scored_test_indices(splits, eval));
        if (!splits.test.empty()) {
            SensitivityCfg sens = cfg.sensitivity;
            sens.seed = derive_seed(cfg.seed, 400, epoch);
            const Vector s_f =
                attacker_scores(attacker, mia_inputs_for(defender, train, head_of(splits.forget, kAucSampleCap), sens));
            const Vector s_t =
                attacker_scores(attacker, mia_inputs_for(defender, eval, head_of(splits.test, kAucSampleCap), sens));
            rec.attacker_auc = roc_auc(std::span<const double>(s_f.data(), static_cast<std::size_t>(s_f.size())),
                                       std::span<const double>(s_t.data(), static_cast<std::size_t>(s_t.size())));
        }
    }
    return rec;
}

UnlearnResult run_unlearning(const DefenderModel& theta0, const UnlearnData& data, const UnlearnConfig& cfg,
                             const EngineObserver& observer) {
    cfg.validate();
    EngineState state = make_engine_state(theta0, cfg);
    UnlearnResult result{theta0, state.attacker, {}};
    if (cfg.epochs == 0) {
        return result;
    }
    if (!data.train_pool || !data.eval_pool || !data.splits) {
        throw ConfigError("run_unlearning: data handles are not set");
    }
    const SplitSet& splits = *data.splits;

    PretrainCfg pre;
    pre.iters = cfg.pretrain_iters;
    pre.batch_size = cfg.batch_size;
    pre.sensitivity = cfg.sensitivity;
    pre.seed = derive_seed(cfg.seed, 500);
    IndexList members(data.train_pool->size());
    std::iota(members.begin(), members.end(), std::size_t{0});
    pretrain_attacker(state.attacker, state.attacker_opt, state.defender, *data.train_pool, members,
                      *data.eval_pool, splits.validation, pre);

    const double ra0 = accuracy(theta0, *data.train_pool, splits.retain);
    std::size_t near_chance = 0;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        EpochRecord rec = unlearn_epoch(state, data, cfg, e, observer);
        spdlog::info("unlearn epoch {} ce {:.4f} loss {:.4f} auc {} ua {} ra {}", e, rec.ce, rec.defender_loss,
                     rec.attacker_auc ? fmt::format("{:.3f}", *rec.attacker_auc) : "-",
                     rec.ua ? fmt::format("{:.2f}", *rec.ua) : "-", rec.ra ? fmt::format("{:.2f}", *rec.ra) : "-");
        if (cfg.checkpoint_dir) {
            save_checkpoint(state.defender.params(), *cfg.checkpoint_dir / fmt::format("epoch_{:03d}.ckpt", e));
        }
        const bool chance = rec.attacker_auc && *rec.attacker_auc >= 0.48 && *rec.attacker_auc <= 0.52 &&
                            rec.ra && *rec.ra >= ra0 - 2.0;
        near_chance = chance ? near_chance + 1 : 0;
        result.history.epochs.push_back(std::move(rec));
        if (cfg.early_stop && near_chance >= 3) {
            result.history.stopped_early = true;
            break;
        }
    }
    result.model = std::move(state.defender);
    result.attacker = std::move(state.attacker);
    return result;
}

}  // namespace advunlearn
