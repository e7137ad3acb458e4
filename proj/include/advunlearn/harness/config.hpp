#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advunlearn/attacker.hpp"
#include "advunlearn/baselines.hpp"
#include "advunlearn/data/splits.hpp"
#include "advunlearn/engine.hpp"
#include "advunlearn/mia_eval.hpp"

namespace advunlearn {

enum class DataSource { synthetic, file };

struct DataSpec {
    DataSource source = DataSource::synthetic;
    // synthetic blobs
    int num_classes = 5;
    std::size_t train_per_class = 200;
    std::size_t eval_per_class = 100;
    std::size_t dim = 16;
    double spread = 1.0;
    std::uint64_t data_seed = 1234;
    // file input
    std::filesystem::path path;
    std::filesystem::path eval_path;  // empty: hold out eval_fraction of `path`
    DataFormat format = DataFormat::csv;
    int declared_classes = 0;         // 0: infer from labels
    double eval_fraction = 0.3;
    bool standardize = true;
};

enum class Method { ours, retrain, ft, ga, ff, iu };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct ExperimentConfig {
    DataSpec data;
    ForgetScheme scheme;

    DefenderArch defender;  // input_dim and num_classes are filled from the data
    AttentionConfig attention;

    TrainCfg pretrain{0.1, 0.9, 5, 64, 0};  // short: a saturated softmax starves the adversarial gradient

    // Unlearning. Unset rate / cutoff follow the scheme defaults.
    double alpha = 0.9;
    double beta = 0.001;
    double lambda = kDefaultSsLambda;
    std::optional<double> unlearn_lr;
    double attacker_lr = 1e-4;
    std::size_t unlearn_epochs = 50;
    std::size_t unlearn_batch = 64;
    bool non_saturating = true;
    std::string alpha_cutoff = "auto";  // "auto", "none" or an iteration count
    std::size_t attacker_steps = 1;
    std::size_t pretrain_iters = 1000;
    std::size_t sens_n = 10;
    double sens_sigma = 1.0;
    SensitivityNorm sens_norm = SensitivityNorm::elementwise;
    bool early_stop = false;
    bool record_history = true;
    bool save_checkpoints = false;

    BaselineConfig baseline;
    double sparsity = 0.0;
    /// Masked CE epochs on the train pool after pruning theta_0.
    std::size_t prune_finetune_epochs = 5;

    MiaFeature svm_feature = MiaFeature::confidence;
    SvmMembers svm_members = SvmMembers::train_pool;
    double svm_reg = 1e-4;
    std::size_t svm_passes = 50;
    bool metric_attacks = true;

    Method method = Method::ours;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path output_dir = "outputs";
    /// Train the retrain gold model per seed and report average disparity.
    bool gold = true;

    /// Throws ConfigError naming the first invalid field.
    void validate() const;

    /// Engine settings for one seed, with scheme defaults resolved.
    UnlearnConfig unlearn_config(std::uint64_t seed) const;
    EvalCfg eval_config(std::uint64_t seed) const;
    /// Report label: method name, with the beta = 0 arm of "ours" marked as the ablation.
    std::string label() const;
};

/// key = value lines grouped in [section]s. Missing keys take defaults.
/// Unknown sections/keys and malformed values throw ParseError naming the key;
/// out-of-range values throw ConfigError naming it.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "section.key=value" overrides on top of a config text's values.
ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides);

/// Every field, in a form parse_config reads back to an equal config.
std::string serialize_config(const ExperimentConfig& cfg);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace advunlearn
