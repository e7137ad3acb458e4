#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advunlearn/data/splits.hpp"
#include "advunlearn/defender.hpp"

namespace advunlearn {

/// Argmax accuracy in percent. Throws EvaluationError on an empty subset.
double accuracy(const DefenderModel& model, const LabeledDataset& data, std::span<const std::size_t> idx);
double accuracy_from_probs(const Matrix& probs, std::span<const int> labels);

/// Area under the ROC curve for "positives score higher", ties counted 1/2.
double roc_auc(std::span<const double> positives, std::span<const double> negatives);

// ---------------------------------------------------------------------------
// Linear SVM (Pegasos-style hinge-loss subgradient descent)

struct SvmCfg {
    double reg = 1e-4;
    std::size_t passes = 50;
    std::uint64_t seed = 0;
    /// Weight each sample by n / (2 * n_class) so both classes count equally.
    bool balanced = true;
};

struct LinearSvm {
    Vector w;           // on standardized features
    double bias = 0.0;
    RowVector mean, scale;
    bool fallback = false;  // midpoint-of-class-means rule was used

    double decision(const RowVector& x) const;
    /// 1 = member, 0 = non-member.
    std::vector<std::uint8_t> predict(const Matrix& x) const;
};

/// labels: 1 = member, 0 = non-member. When the fitted classifier puts every
/// training sample in one class, falls back to the hyperplane through the
/// midpoint of the class means (logged). Throws EvaluationError if a class is absent.
LinearSvm fit_svm(const Matrix& features, std::span<const int> labels, const SvmCfg& cfg);

/// confidence: max softmax probability. label_confidence: probability of the
/// true label. probabilities: the full vector.
enum class MiaFeature { confidence, label_confidence, probabilities };

std::string to_string(MiaFeature f);
MiaFeature mia_feature_from_string(const std::string& s);

/// Per-sample attack features. `labels` is only read for label_confidence.
Matrix mia_features(const Matrix& probs, std::span<const int> labels, MiaFeature feature);

/// 100 * (#predicted non-member) / n. Throws EvaluationError for n == 0.
double efficacy_from_predictions(std::span<const std::uint8_t> member_predictions);

struct MiaEfficacyCfg {
    SvmCfg svm;
    MiaFeature feature = MiaFeature::confidence;
};

/// Fits the SVM on the defender's outputs for `members` (label 1) and
/// `nonmembers` (label 0), then returns the percentage of `forget` samples
/// predicted non-member.
double mia_efficacy(const DefenderModel& model, const LabeledDataset& train_pool,
                    std::span<const std::size_t> members, const LabeledDataset& eval_pool,
                    std::span<const std::size_t> nonmembers, std::span<const std::size_t> forget,
                    const MiaEfficacyCfg& cfg);

/// Fresh SVM attacker separating `a` (label 1) from `b` (label 0): fits on a
/// seeded half of each set and returns balanced accuracy in [0, 1] on the rest.
double svm_distinguish_accuracy(const DefenderModel& model, const LabeledDataset& pool_a,
                                std::span<const std::size_t> a, const LabeledDataset& pool_b,
                                std::span<const std::size_t> b, const MiaEfficacyCfg& cfg);

// ---------------------------------------------------------------------------
// Metric-based attacks with class-dependent thresholds

enum class AttackKind { correctness, confidence, entropy, modified_entropy };

std::string to_string(AttackKind kind);
inline constexpr AttackKind kAllAttacks[] = {AttackKind::correctness, AttackKind::confidence,
                                             AttackKind::entropy, AttackKind::modified_entropy};

/// -sum_i p_i log p_i with p clamped to >= 1e-12 inside the log.
double prediction_entropy(std::span<const double> p);
/// -(1 - p_y) log p_y - sum_{i != y} p_i log(1 - p_i), clamped likewise.
double modified_entropy(std::span<const double> p, int label);

/// Raw per-sample score of an attack (correctness: 1/0, confidence: max p,
/// entropy, modified entropy).
double attack_score(AttackKind kind, std::span<const double> p, int label);

struct ThresholdAttack {
    AttackKind kind = AttackKind::confidence;
    std::vector<double> thresholds;  // per class, in member-score orientation
    double global_threshold = 0.0;

    /// Member iff oriented score >= the sample's class threshold.
    bool is_member(std::span<const double> p, int label) const;
};

/// Picks per-class thresholds maximizing balanced member/non-member accuracy
/// over midpoints of sorted calibration scores (ties -> lower threshold).
/// Classes lacking members or non-members use the global threshold.
ThresholdAttack calibrate_attack(AttackKind kind, const Matrix& member_probs,
                                 std::span<const int> member_labels, const Matrix& nonmember_probs,
                                 std::span<const int> nonmember_labels, int num_classes);

struct MetricAttackResult {
    double accuracy = 0.0;  // balanced accuracy on held-out members/non-members, percent
    double efficacy = 0.0;  // percent of forget samples predicted non-member
};

/// Calibrates on one half of (members, nonmembers), measures accuracy on the
/// other half and efficacy on `forget`. `forget` never enters calibration.
MetricAttackResult metric_attack(AttackKind kind, const DefenderModel& model,
                                 const LabeledDataset& train_pool, std::span<const std::size_t> members,
                                 const LabeledDataset& eval_pool, std::span<const std::size_t> nonmembers,
                                 std::span<const std::size_t> forget, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reports

struct MetricsReport {
    std::string method;
    std::uint64_t seed = 0;
    std::optional<double> ua, mia_efficacy, ra, ta;
    std::map<std::string, MetricAttackResult> metric_attacks;
    std::optional<double> avg_disparity;

    /// Throws EvaluationError if a percentage lies outside [0, 100].
    void validate() const;
};

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

/// Mean absolute difference over UA, MIA-efficacy, RA, TA. Throws
/// EvaluationError if either report lacks one of them.
double avg_disparity(const MetricsReport& report, const MetricsReport& gold);

/// Which train-pool samples serve as members for the SVM attack.
enum class SvmMembers { train_pool, retain };

struct EvalCfg {
    MiaEfficacyCfg mia;
    SvmMembers svm_members = SvmMembers::train_pool;
    bool metric_attacks = true;
    std::uint64_t seed = 0;
};

/// UA / RA / TA / MIA-efficacy (+ metric attacks) of a model under a split.
MetricsReport evaluate_model(const DefenderModel& model, const LabeledDataset& train_pool,
                             const LabeledDataset& eval_pool, const SplitSet& splits, const EvalCfg& cfg);

}  // namespace advunlearn
