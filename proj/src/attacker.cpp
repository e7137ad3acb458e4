#include "advunlearn/attacker.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "advunlearn/data/sampler.hpp"
#include "advunlearn/errors.hpp"
#include "advunlearn/util/parallel.hpp"

namespace advunlearn {

Matrix draw_noise(std::size_t batch, std::size_t dim, const SensitivityCfg& cfg) {
    Matrix noise(static_cast<Eigen::Index>(batch * cfg.n), static_cast<Eigen::Index>(dim));
    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < noise.size(); ++i) {
        noise.data()[i] = cfg.sigma * normal(rng);
    }
    return noise;
}

namespace {

Matrix repeat_each_row(const Matrix& m, Eigen::Index n) {
    Matrix out(m.rows() * n, m.cols());
    for (Eigen::Index b = 0; b < m.rows(); ++b) {
        out.middleRows(b * n, n) = m.row(b).replicate(n, 1);
    }
    return out;
}

DefenderModel::Pass repeat_rows(const DefenderModel::Pass& p, Eigen::Index n) {
    DefenderModel::Pass r;
    for (const auto& m : p.layer_inputs) r.layer_inputs.push_back(repeat_each_row(m, n));
    for (const auto& m : p.pre_acts) r.pre_acts.push_back(repeat_each_row(m, n));
    r.features = repeat_each_row(p.features, n);
    r.logits = repeat_each_row(p.logits, n);
    r.probs = repeat_each_row(p.probs, n);
    return r;
}

}  // namespace

DefenderProbe probe_defender(const DefenderModel& model, const Matrix& x, const SensitivityCfg& cfg,
                             const Matrix* noise) {
    if (cfg.n == 0) {
        throw ConfigError("sensitivity needs at least one noise draw");
    }
    if (!(cfg.sigma >= 0.0)) {
        throw ConfigError("sensitivity sigma must be nonnegative");
    }
    const auto batch = static_cast<std::size_t>(x.rows());
    const auto n = static_cast<Eigen::Index>(cfg.n);
    Matrix drawn;
    if (!noise) {
        drawn = draw_noise(batch, static_cast<std::size_t>(x.cols()), cfg);
        noise = &drawn;
    } else if (noise->rows() != x.rows() * n || noise->cols() != x.cols()) {
        throw ShapeError("noise matrix does not match batch x draws");
    }
    DefenderProbe p;
    p.draws = cfg.n;
    p.norm = cfg.norm;
    p.clean = model.forward_pass(x);
    if (noise == &drawn && cfg.sigma == 0.0) {
        // x + 0 == x; reuse the clean rows so GEMM blocking cannot make them differ
        p.noisy = repeat_rows(p.clean, n);
    } else {
        Matrix noisy_x(x.rows() * n, x.cols());
        for (Eigen::Index b = 0; b < x.rows(); ++b) {
            noisy_x.middleRows(b * n, n) = noise->middleRows(b * n, n).rowwise() + x.row(b);
        }
        p.noisy = model.forward_pass(noisy_x);
    }
    const Eigen::Index k = p.clean.probs.cols();
    p.delta = Matrix::Zero(x.rows(), k);
    for (Eigen::Index b = 0; b < x.rows(); ++b) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto diff = p.clean.probs.row(b) - p.noisy.probs.row(b * n + i);
            if (cfg.norm == SensitivityNorm::elementwise) {
                p.delta.row(b) += diff.cwiseAbs();
            } else {
                p.delta.row(b).array() += diff.norm();
            }
        }
    }
    p.delta /= static_cast<double>(n);
    return p;
}

Matrix sensitivity(const DefenderModel& model, const Matrix& x, const SensitivityCfg& cfg) {
    return probe_defender(model, x, cfg).delta;
}

void backward_probe(DefenderModel& model, const DefenderProbe& probe, const Matrix& d_probs,
                    const Matrix& d_delta, const Matrix* d_features) {
    const Eigen::Index batch = probe.clean.probs.rows();
    const auto n = static_cast<Eigen::Index>(probe.draws);
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix d_clean = d_probs;
    Matrix d_noisy = Matrix::Zero(probe.noisy.probs.rows(), probe.noisy.probs.cols());
    for (Eigen::Index b = 0; b < batch; ++b) {
        const double d_scalar = d_delta.row(b).sum();
        for (Eigen::Index i = 0; i < n; ++i) {
            const RowVector diff = probe.clean.probs.row(b) - probe.noisy.probs.row(b * n + i);
            RowVector g;
            if (probe.norm == SensitivityNorm::elementwise) {
                // d|u|/du = sign(u); zero at the kink.
                g = (diff.array().sign() * d_delta.row(b).array()).matrix() * inv_n;
            } else {
                const double norm = diff.norm();
                g = norm > 0.0 ? RowVector(diff * (d_scalar * inv_n / norm))
                               : RowVector::Zero(diff.size());
            }
            d_clean.row(b) += g;
            d_noisy.row(b * n + i) -= g;
        }
    }
    model.backward(probe.clean, softmax_rows_backward(probe.clean.probs, d_clean), d_features);
    model.backward(probe.noisy, softmax_rows_backward(probe.noisy.probs, d_noisy));
}

Vector build_mia_input(std::span<const double> probs, std::span<const double> delta, int label,
                       int num_classes) {
    const auto k = static_cast<std::size_t>(num_classes);
    if (probs.size() != k || delta.size() != k) {
        throw ShapeError("MIA input blocks must each have K=" + std::to_string(k) + " entries");
    }
    if (label < 0 || label >= num_classes) {
        throw ShapeError("label " + std::to_string(label) + " outside [0, K)");
    }
    Vector m = Vector::Zero(static_cast<Eigen::Index>(3 * k));
    for (std::size_t i = 0; i < k; ++i) {
        m[static_cast<Eigen::Index>(i)] = probs[i];
        m[static_cast<Eigen::Index>(k + i)] = delta[i];
    }
    m[static_cast<Eigen::Index>(2 * k) + label] = 1.0;
    return m;
}

Matrix build_mia_batch(const Matrix& probs, const Matrix& delta, std::span<const int> labels) {
    const Eigen::Index k = probs.cols();
    if (delta.rows() != probs.rows() || delta.cols() != k ||
        static_cast<std::size_t>(probs.rows()) != labels.size()) {
        throw ShapeError("MIA batch blocks disagree in shape");
    }
    Matrix m = Matrix::Zero(probs.rows(), 3 * k);
    m.leftCols(k) = probs;
    m.middleCols(k, k) = delta;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= k) {
            throw ShapeError("label out of range in MIA batch");
        }
        m(static_cast<Eigen::Index>(i), 2 * k + labels[i]) = 1.0;
    }
    return m;
}

MiaParts split_mia_input(std::span<const double> m, int num_classes) {
    const auto k = static_cast<std::size_t>(num_classes);
    if (m.size() != 3 * k) {
        throw ShapeError("MIA input length " + std::to_string(m.size()) + " != 3K = " + std::to_string(3 * k));
    }
    MiaParts p;
    p.probs = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(k));
    p.delta = Eigen::Map<const Vector>(m.data() + k, static_cast<Eigen::Index>(k));
    int hot = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double v = m[2 * k + i];
        if (v == 1.0) {
            p.label = static_cast<int>(i);
            ++hot;
        } else if (v != 0.0) {
            hot = -1;
            break;
        }
    }
    if (hot != 1) {
        throw ShapeError("label block is not one-hot");
    }
    return p;
}

AttackerModel::AttackerModel(const AttackerArch& arch, std::uint64_t seed) : arch_(arch) {
    if (arch.num_classes < 2) {
        throw ConfigError("attacker needs at least 2 classes");
    }
    arch.attention.validate();
    Rng rng(seed);
    const auto k = static_cast<std::size_t>(arch.num_classes);
    const std::size_t d = arch.attention.model_dim;
    static constexpr const char* kBlockNames[kTokens] = {"embed_probs", "embed_delta", "embed_label"};
    for (const char* name : kBlockNames) {
        embed_.emplace_back(params_, name, k, d, rng);
    }
    stack_ = AttentionStack(params_, "attention", arch.attention, rng);
    head_ = Dense(params_, "binary_head", d, 1, rng);
}

AttackerModel::Pass AttackerModel::forward_pass(const Matrix& mia_inputs) const {
    const auto k = static_cast<Eigen::Index>(arch_.num_classes);
    if (mia_inputs.cols() != 3 * k) {
        throw ShapeError("attacker expects inputs of length 3K = " + std::to_string(3 * k) + ", got " +
                         std::to_string(mia_inputs.cols()));
    }
    const Eigen::Index batch = mia_inputs.rows();
    const auto d = static_cast<Eigen::Index>(arch_.attention.model_dim);
    const auto T = static_cast<Eigen::Index>(kTokens);
    Pass p;
    p.input = mia_inputs;
    p.tokens.resize(batch * T, d);
    for (Eigen::Index t = 0; t < T; ++t) {
        const Matrix e = embed_[static_cast<std::size_t>(t)].forward(params_, mia_inputs.middleCols(t * k, k));
        for (Eigen::Index b = 0; b < batch; ++b) {
            p.tokens.row(b * T + t) = e.row(b);
        }
    }
    const Matrix encoded = stack_.forward(params_, p.tokens, kTokens, &p.cache);
    p.pooled.resize(batch, d);
    for (Eigen::Index b = 0; b < batch; ++b) {
        p.pooled.row(b) = encoded.middleRows(b * T, T).colwise().mean();
    }
    p.logits = head_.forward(params_, p.pooled).col(0);
    p.probs = p.logits.unaryExpr([](double l) { return sigmoid(l); });
    return p;
}

Matrix AttackerModel::backward(const Pass& pass, const Vector& d_logits) {
    const auto k = static_cast<Eigen::Index>(arch_.num_classes);
    const Eigen::Index batch = pass.input.rows();
    const auto T = static_cast<Eigen::Index>(kTokens);
    const Matrix d_pooled = head_.backward(params_, pass.pooled, Matrix(d_logits));
    Matrix d_encoded(batch * T, d_pooled.cols());
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index t = 0; t < T; ++t) {
            d_encoded.row(b * T + t) = d_pooled.row(b) / static_cast<double>(T);
        }
    }
    const Matrix d_tokens = stack_.backward(params_, pass.cache, d_encoded, kTokens);
    Matrix d_input(batch, 3 * k);
    for (Eigen::Index t = 0; t < T; ++t) {
        Matrix d_e(batch, d_tokens.cols());
        for (Eigen::Index b = 0; b < batch; ++b) {
            d_e.row(b) = d_tokens.row(b * T + t);
        }
        d_input.middleCols(t * k, k) =
            embed_[static_cast<std::size_t>(t)].backward(params_, pass.input.middleCols(t * k, k), d_e);
    }
    return d_input;
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

AttackerObjective attacker_loss(const Vector& logit_f, const Vector& logit_v) {
    if (logit_f.size() == 0 || logit_v.size() == 0) {
        throw ShapeError("attacker_loss needs nonempty forget and validation batches");
    }
    if (logit_f.size() != logit_v.size()) {
        spdlog::warn("attacker_loss: batch sizes differ ({} vs {}); truncating to the smaller",
                     logit_f.size(), logit_v.size());
    }
    const Eigen::Index pairs = std::min(logit_f.size(), logit_v.size());
    AttackerObjective obj;
    obj.pairs = static_cast<std::size_t>(pairs);
    obj.d_logit_f = Vector::Zero(logit_f.size());
    obj.d_logit_v = Vector::Zero(logit_v.size());
    const double inv = 1.0 / static_cast<double>(pairs);
    double total = 0.0;
    for (Eigen::Index i = 0; i < pairs; ++i) {
        // log sigmoid(l) = -softplus(-l); log(1 - sigmoid(l)) = -softplus(l)
        total += -softplus(-logit_f[i]) - softplus(logit_v[i]);
        obj.d_logit_f[i] = (1.0 - sigmoid(logit_f[i])) * inv;
        obj.d_logit_v[i] = -sigmoid(logit_v[i]) * inv;
    }
    obj.value = total * inv;
    return obj;
}

double attacker_loss_from_probs(std::span<const double> a_f, std::span<const double> a_v) {
    if (a_f.empty() || a_v.empty()) {
        throw ShapeError("attacker_loss needs nonempty forget and validation batches");
    }
    if (a_f.size() != a_v.size()) {
        spdlog::warn("attacker_loss: batch sizes differ ({} vs {}); truncating to the smaller",
                     a_f.size(), a_v.size());
    }
    const std::size_t pairs = std::min(a_f.size(), a_v.size());
    double total = 0.0;
    for (std::size_t i = 0; i < pairs; ++i) {
        total += std::log(std::max(a_f[i], kProbFloor)) + std::log(std::max(1.0 - a_v[i], kProbFloor));
    }
    return total / static_cast<double>(pairs);
}

Matrix mia_inputs_for(const DefenderModel& defender, const LabeledDataset& data,
                      std::span<const std::size_t> idx, const SensitivityCfg& cfg) {
    const Matrix x = data.rows(idx);
    const auto probe = probe_defender(defender, x, cfg);
    return build_mia_batch(probe.clean.probs, probe.delta, data.labels_at(idx));
}

void pretrain_attacker(AttackerModel& attacker, Adam& opt, const DefenderModel& defender,
                       const LabeledDataset& member_pool, std::span<const std::size_t> members,
                       const LabeledDataset& nonmember_pool, std::span<const std::size_t> nonmembers,
                       const PretrainCfg& cfg) {
    if (cfg.iters == 0) {
        return;
    }
    if (members.empty() || nonmembers.empty()) {
        throw ConfigError("attacker pretraining needs members and non-members");
    }
    CyclicSampler member_sampler(IndexList(members.begin(), members.end()), derive_seed(cfg.seed, 11));
    CyclicSampler nonmember_sampler(IndexList(nonmembers.begin(), nonmembers.end()),
                                    derive_seed(cfg.seed, 12));
    for (std::size_t it = 0; it < cfg.iters; ++it) {
        SensitivityCfg sens = cfg.sensitivity;
        sens.seed = derive_seed(cfg.seed, 13, it);
        const Matrix m_f = mia_inputs_for(defender, member_pool, member_sampler.next(cfg.batch_size), sens);
        sens.seed = derive_seed(cfg.seed, 14, it);
        const Matrix m_v =
            mia_inputs_for(defender, nonmember_pool, nonmember_sampler.next(cfg.batch_size), sens);

        Matrix stacked(m_f.rows() + m_v.rows(), m_f.cols());
        stacked << m_f, m_v;
        attacker.params().zero_grad();
        const auto pass = attacker.forward_pass(stacked);
        const auto obj = attacker_loss(pass.logits.head(m_f.rows()), pass.logits.tail(m_v.rows()));
        Vector d_logits(stacked.rows());
        d_logits << obj.d_logit_f, obj.d_logit_v;
        attacker.backward(pass, d_logits);
        opt.step(attacker.params(), StepDirection::ascend);
    }
    attacker.params().zero_grad();
}

Vector attacker_scores(const AttackerModel& attacker, const Matrix& mia_inputs) {
    Vector out(mia_inputs.rows());
    parallel_for(static_cast<std::size_t>(mia_inputs.rows()), 256, [&](std::size_t b, std::size_t e) {
        const auto rows = static_cast<Eigen::Index>(e - b);
        out.segment(static_cast<Eigen::Index>(b), rows) =
            attacker.forward(mia_inputs.middleRows(static_cast<Eigen::Index>(b), rows));
    });
    return out;
}

}  // namespace advunlearn
