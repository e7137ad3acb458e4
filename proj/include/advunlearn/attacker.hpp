#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "advunlearn/data/dataset.hpp"
#include "advunlearn/defender.hpp"
#include "advunlearn/nn/attention.hpp"
#include "advunlearn/nn/optim.hpp"

namespace advunlearn {

/// How the per-draw output difference is reduced. `elementwise` keeps one
/// entry per class; `l2` uses the vector norm and broadcasts it to K entries.
enum class SensitivityNorm { elementwise, l2 };

struct SensitivityCfg {
    std::size_t n = 10;
    double sigma = 1.0;
    std::uint64_t seed = 0;
    SensitivityNorm norm = SensitivityNorm::elementwise;
};

/// Defender outputs on a batch and on its noisy copies. Noisy rows are
/// sample-major: row b * n + i is sample b with noise draw i.
struct DefenderProbe {
    DefenderModel::Pass clean;
    DefenderModel::Pass noisy;
    Matrix delta;  // B x K
    std::size_t draws = 0;
    SensitivityNorm norm = SensitivityNorm::elementwise;
};

/// (B * n) x dim Gaussian noise with std cfg.sigma from Rng(cfg.seed).
Matrix draw_noise(std::size_t batch, std::size_t dim, const SensitivityCfg& cfg);

/// Runs the defender on x and on x + noise and reduces the differences.
/// When `noise` is null it is drawn from cfg.
DefenderProbe probe_defender(const DefenderModel& model, const Matrix& x, const SensitivityCfg& cfg,
                             const Matrix* noise = nullptr);

/// Delta(x)_k = (1/n) sum_i |D(x)_k - D(x + eps_i)_k| per row of x.
Matrix sensitivity(const DefenderModel& model, const Matrix& x, const SensitivityCfg& cfg);

/// Backpropagates dL/dprobs (clean rows) and dL/ddelta into the defender,
/// plus an optional dL/dfeatures for the clean rows.
void backward_probe(DefenderModel& model, const DefenderProbe& probe, const Matrix& d_probs,
                    const Matrix& d_delta, const Matrix* d_features = nullptr);

/// Attacker input layout: [probs (K), delta (K), onehot(label) (K)].
Vector build_mia_input(std::span<const double> probs, std::span<const double> delta, int label, int num_classes);
Matrix build_mia_batch(const Matrix& probs, const Matrix& delta, std::span<const int> labels);

struct MiaParts {
    Vector probs;
    Vector delta;
    int label = -1;
};
/// Inverse of build_mia_input. Throws ShapeError when the one-hot block is not one-hot.
MiaParts split_mia_input(std::span<const double> m, int num_classes);

struct AttackerArch {
    int num_classes = 0;
    AttentionConfig attention;
};

/// Membership classifier: each of the three input blocks is embedded by its
/// own dense layer into a model_dim token, the three tokens pass through the
/// attention stack, are mean-pooled, and a dense head gives one logit.
class AttackerModel {
public:
    static constexpr std::size_t kTokens = 3;

    struct Pass {
        Matrix input;
        Matrix tokens;
        AttentionStack::Cache cache;
        Matrix pooled;
        Vector logits;
        Vector probs;
    };

    AttackerModel() = default;
    AttackerModel(const AttackerArch& arch, std::uint64_t seed);

    Pass forward_pass(const Matrix& mia_inputs) const;
    Vector forward(const Matrix& mia_inputs) const { return forward_pass(mia_inputs).probs; }
    /// Accumulates parameter gradients from dL/dlogits; returns dL/dinputs.
    Matrix backward(const Pass& pass, const Vector& d_logits);

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const AttackerArch& arch() const { return arch_; }
    const Dense& head_layer() const { return head_; }
    const AttentionStack& stack() const { return stack_; }

private:
    AttackerArch arch_;
    ParamStore params_;
    std::vector<Dense> embed_;
    AttentionStack stack_;
    Dense head_;
};

/// Value and logit gradients of
///   mean_p [ log a_f(p) + log(1 - a_v(p)) ]
/// over paired members (forget) and non-members (validation).
struct AttackerObjective {
    double value = 0.0;
    Vector d_logit_f;
    Vector d_logit_v;
    std::size_t pairs = 0;
};

/// Pairs are truncated to the shorter batch (a warning is logged). Throws
/// ShapeError if either batch is empty.
AttackerObjective attacker_loss(const Vector& logit_f, const Vector& logit_v);

/// Same objective from probabilities (no gradients).
double attacker_loss_from_probs(std::span<const double> a_f, std::span<const double> a_v);

struct PretrainCfg {
    std::size_t iters = 1000;
    std::size_t batch_size = 64;
    SensitivityCfg sensitivity;
    std::uint64_t seed = 0;
};

/// Attacker inputs for dataset rows under the (frozen) defender.
Matrix mia_inputs_for(const DefenderModel& defender, const LabeledDataset& data,
                      std::span<const std::size_t> idx, const SensitivityCfg& cfg);

/// Gradient ascent on the attacker objective with member batches drawn from
/// `members` and non-member batches from `nonmembers`. The defender is only read.
void pretrain_attacker(AttackerModel& attacker, Adam& opt, const DefenderModel& defender,
                       const LabeledDataset& member_pool, std::span<const std::size_t> members,
                       const LabeledDataset& nonmember_pool, std::span<const std::size_t> nonmembers,
                       const PretrainCfg& cfg);

/// Attacker scores for a large input matrix, evaluated in row chunks (possibly
/// on several threads; see parallel.hpp).
Vector attacker_scores(const AttackerModel& attacker, const Matrix& mia_inputs);

}  // namespace advunlearn
