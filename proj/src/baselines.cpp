#include "advunlearn/baselines.hpp"

#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "advunlearn/data/sampler.hpp"
#include "advunlearn/errors.hpp"
#include "advunlearn/util/parallel.hpp"

namespace advunlearn {

namespace {

constexpr std::size_t kFisherChunk = 64;

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) {
        throw ConfigError(field + " " + what);
    }
}

void validate_train(const TrainCfg& c, const std::string& prefix) {
    require(c.lr > 0.0, prefix + ".lr", "must be positive");
    require(c.momentum >= 0.0 && c.momentum < 1.0, prefix + ".momentum", "must lie in [0, 1)");
    require(c.batch_size > 0, prefix + ".batch_size", "must be positive");
}

bool masked_out(const ParamStore& params, Eigen::Index i) {
    const auto& m = params.mask();
    return m && (*m)[static_cast<std::size_t>(i)] == 0;
}

}  // namespace

double ce_step(DefenderModel& model, Sgd& opt, const LabeledDataset& data, const IndexList& batch) {
    model.params().zero_grad();
    const auto labels = data.labels_at(batch);
    const double loss = ce_loss(model, data.rows(batch), labels);
    opt.step(model.params());
    return loss;
}

double ce_epoch(DefenderModel& model, Sgd& opt, const LabeledDataset& data, const IndexList& pool,
                std::size_t batch_size, std::uint64_t epoch_seed) {
    const auto batches = shuffled_batches(pool, batch_size, epoch_seed);
    double total = 0.0;
    for (const auto& b : batches) {
        total += ce_step(model, opt, data, b);
    }
    return batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
}

void train_epochs(DefenderModel& model, const LabeledDataset& data, const IndexList& pool, const TrainCfg& cfg) {
    if (cfg.epochs == 0) {
        return;
    }
    if (pool.empty()) {
        throw ConfigError("cannot train on an empty index set");
    }
    Sgd opt(cfg.lr, cfg.momentum);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const double loss = ce_epoch(model, opt, data, pool, cfg.batch_size, derive_seed(cfg.seed, e));
        if (!std::isfinite(loss)) {
            throw NumericError("non-finite CE loss in training epoch " + std::to_string(e));
        }
        spdlog::debug("train epoch {} ce {:.6f}", e, loss);
    }
}

DefenderModel train_model(const DefenderArch& arch, const LabeledDataset& data, const IndexList& pool,
                          const TrainCfg& cfg, std::uint64_t init_seed) {
    DefenderModel model(arch, init_seed);
    train_epochs(model, data, pool, cfg);
    return model;
}

std::string to_string(BaselineMethod m) {
    switch (m) {
        case BaselineMethod::retrain: return "retrain";
        case BaselineMethod::ft: return "ft";
        case BaselineMethod::ga: return "ga";
        case BaselineMethod::ff: return "ff";
        case BaselineMethod::iu: return "iu";
    }
    return "unknown";
}

BaselineMethod baseline_from_string(const std::string& s) {
    for (auto m : {BaselineMethod::retrain, BaselineMethod::ft, BaselineMethod::ga, BaselineMethod::ff,
                   BaselineMethod::iu}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw ConfigError("unknown baseline method '" + s + "'");
}

void BaselineConfig::validate() const {
    validate_train(retrain, "retrain");
    validate_train(finetune, "finetune");
    validate_train(ascent, "ascent");
    require(ff_scale >= 0.0, "ff_scale", "must be nonnegative");
    require(ff_damping > 0.0, "ff_damping", "must be positive");
    require(iu_damping > 0.0, "iu_damping", "must be positive");
}

DefenderModel retrain(const DefenderArch& arch, const LabeledDataset& data, const IndexList& retain,
                      const TrainCfg& cfg, std::uint64_t init_seed) {
    if (retain.empty()) {
        throw ConfigError("retrain: empty retain set");
    }
    return train_model(arch, data, retain, cfg, init_seed);
}

DefenderModel finetune(const DefenderModel& theta0, const LabeledDataset& data, const IndexList& retain,
                       const TrainCfg& cfg) {
    DefenderModel model = theta0;
    train_epochs(model, data, retain, cfg);
    return model;
}

double ascend_once(ParamStore& params, Sgd& opt, const LossFn& loss) {
    params.zero_grad();
    const double value = loss(params);
    opt.step(params, std::nullopt, StepDirection::ascend);
    return value;
}

DefenderModel gradient_ascent(const DefenderModel& theta0, const LabeledDataset& data, const IndexList& forget,
                              const TrainCfg& cfg) {
    DefenderModel model = theta0;
    if (cfg.epochs == 0 || forget.empty()) {
        return model;
    }
    Sgd opt(cfg.lr, cfg.momentum);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto batches = shuffled_batches(forget, cfg.batch_size, derive_seed(cfg.seed, e));
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto labels = data.labels_at(batches[b]);
            const Matrix x = data.rows(batches[b]);
            const double loss =
                ascend_once(model.params(), opt, [&](ParamStore&) { return ce_loss(model, x, labels); });
            if (!std::isfinite(loss) || loss > kAscentDivergence) {
                std::ostringstream msg;
                msg << "gradient ascent diverged at epoch " << e << ", batch " << b << ": loss " << loss
                    << " (limit " << kAscentDivergence << ")";
                throw NumericError(msg.str());
            }
        }
    }
    return model;
}

Vector diagonal_fisher(ParamStore& params, std::size_t n_samples,
                       const std::function<void(std::size_t, ParamStore&)>& per_sample_grad) {
    if (n_samples == 0) {
        throw EvaluationError("diagonal_fisher over zero samples");
    }
    Vector sum = Vector::Zero(static_cast<Eigen::Index>(params.size()));
    for (std::size_t i = 0; i < n_samples; ++i) {
        params.zero_grad();
        per_sample_grad(i, params);
        sum += params.grads().array().square().matrix();
    }
    params.zero_grad();
    return sum / static_cast<double>(n_samples);
}

Vector defender_fisher(const DefenderModel& model, const LabeledDataset& data, const IndexList& idx) {
    if (idx.empty()) {
        throw EvaluationError("defender_fisher over an empty set");
    }
    const std::size_t chunks = (idx.size() + kFisherChunk - 1) / kFisherChunk;
    std::vector<Vector> partial(chunks);
    parallel_for(idx.size(), kFisherChunk, [&](std::size_t begin, std::size_t end) {
        DefenderModel local = model;
        partial[begin / kFisherChunk] = diagonal_fisher(local.params(), end - begin, [&](std::size_t i, ParamStore&) {
            const IndexList one{idx[begin + i]};
            const auto labels = data.labels_at(one);
            ce_loss(local, data.rows(one), labels);
        });
        partial[begin / kFisherChunk] *= static_cast<double>(end - begin);
    });
    Vector total = Vector::Zero(static_cast<Eigen::Index>(model.params().size()));
    for (const auto& p : partial) {
        total += p;
    }
    return total / static_cast<double>(idx.size());
}

void fisher_perturb(ParamStore& params, const Vector& fisher, double scale, double damping, std::uint64_t seed) {
    if (static_cast<std::size_t>(fisher.size()) != params.size()) {
        throw ShapeError("fisher_perturb: Fisher diagonal does not match the parameter count");
    }
    if (!(damping > 0.0) || scale < 0.0) {
        throw ConfigError("fisher_perturb: damping must be positive and scale nonnegative");
    }
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector& theta = params.values();
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double eps = normal(rng);
        if (masked_out(params, i)) {
            continue;
        }
        theta[i] += scale * std::pow(fisher[i] + damping, -0.25) * eps;
    }
}

DefenderModel fisher_forget(const DefenderModel& theta0, const LabeledDataset& data, const IndexList& retain,
                            double scale, double damping, std::uint64_t seed) {
    DefenderModel model = theta0;
    if (scale == 0.0) {
        return model;
    }
    const Vector fisher = defender_fisher(model, data, retain);
    fisher_perturb(model.params(), fisher, scale, damping, seed);
    return model;
}

void influence_step(ParamStore& params, const Vector& grad_sum, std::size_t n,
                    const std::function<Vector(const Vector&)>& solve) {
    if (n == 0) {
        throw ConfigError("influence_step: training-set size must be positive");
    }
    if (static_cast<std::size_t>(grad_sum.size()) != params.size()) {
        throw ShapeError("influence_step: gradient size does not match the parameter count");
    }
    const Vector delta = solve(grad_sum) / static_cast<double>(n);
    Vector& theta = params.values();
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        if (!masked_out(params, i)) {
            theta[i] += delta[i];
        }
    }
}

DefenderModel influence_unlearn(const DefenderModel& theta0, const LabeledDataset& data, const IndexList& train,
                                const IndexList& forget, double damping) {
    DefenderModel model = theta0;
    if (forget.empty()) {
        return model;
    }
    if (!(damping > 0.0)) {
        throw ConfigError("iu_damping must be positive");
    }
    const Vector fisher = defender_fisher(model, data, train);

    // sum over the forget set of per-sample CE gradients = |f| * batch-mean gradient
    model.params().zero_grad();
    const auto labels = data.labels_at(forget);
    ce_loss(model, data.rows(forget), labels);
    const Vector grad_sum = model.params().grads() * static_cast<double>(forget.size());
    model.params().zero_grad();

    influence_step(model.params(), grad_sum, train.size(), [&](const Vector& g) {
        return Vector(g.array() / (fisher.array() + damping));
    });
    return model;
}

}  // namespace advunlearn
