#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "advunlearn/data/dataset.hpp"
#include "advunlearn/data/splits.hpp"
#include "advunlearn/defender.hpp"
#include "advunlearn/engine.hpp"
#include "advunlearn/harness/config.hpp"
#include "advunlearn/harness/report.hpp"
#include "advunlearn/mia_eval.hpp"

namespace advunlearn {

struct PreparedData {
    LabeledDataset train;
    LabeledDataset eval;
};

/// Builds or loads the train and eval pools. Synthetic eval data shares the
/// train centers with fresh noise; a file without eval_path is split by a
/// seeded shuffle. When enabled, both pools are standardized with statistics
/// of the train pool.
PreparedData prepare_data(const DataSpec& spec);

/// Independent RNG streams per pipeline stage.
enum class Stage : std::uint64_t {
    splits = 1,
    theta0_init,
    theta0_train,
    prune_finetune,
    method_init,
    method_train,
    method_noise,
    gold_init,
    gold_train,
};

std::uint64_t stage_seed(std::uint64_t seed, Stage stage);

/// Ordered record of pipeline stages and the artifacts each produced.
/// Registering a stage whose inputs were not produced by an earlier stage
/// throws ConfigError, so a stage can never read a later stage's files.
class StageManifest {
public:
    explicit StageManifest(std::optional<std::filesystem::path> file = std::nullopt);

    void record(const std::string& stage, const std::vector<std::string>& inputs,
                const std::vector<std::string>& outputs);
    const nlohmann::json& json() const { return doc_; }

private:
    std::optional<std::filesystem::path> file_;
    nlohmann::json doc_;
    std::vector<std::string> produced_;
};

struct SeedRun {
    SplitSet splits;
    DefenderModel theta0;
    DefenderModel unlearned;
    std::optional<RunHistory> history;
    MetricsReport report;
    double runtime_minutes = 0.0;  // wall clock of the unlearning method alone
};

/// One seed: splits, theta_0, optional pruning, method, retrain gold,
/// evaluation. Artifacts go to `seed_dir` when given.
SeedRun run_seed(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed,
                 const std::optional<std::filesystem::path>& seed_dir = std::nullopt);

struct ExperimentResult {
    std::vector<SeedOutcome> outcomes;
    AggregateReport aggregate;
    bool all_ok = false;
};

/// Validates, runs every seed (recording per-seed failures), aggregates, and
/// writes config.ini, per-seed artifacts, aggregate.json and summary.csv under
/// cfg.output_dir. Throws EvaluationError only when every seed failed.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace advunlearn
