#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "advunlearn/errors.hpp"
#include "advunlearn/harness/config.hpp"
#include "advunlearn/harness/experiment.hpp"
#include "advunlearn/harness/report.hpp"
#include "advunlearn/util/io.hpp"

namespace {

using advunlearn::ExperimentConfig;

// Command-line flags that map onto a config key.
struct FlagOverride {
    const char* flag;
    const char* key;
    const char* help;
};

constexpr FlagOverride kValueFlags[] = {
    {"--data", "data.path", "Dataset file (switches data.source to file)"},
    {"--format", "data.format", "Dataset file format: csv or binary"},
    {"--scheme", "split.scheme", "Forgetting scheme: random or class_wise"},
    {"--forget-fraction", "split.forget_fraction", "Fraction of the train pool to forget"},
    {"--forget-class", "split.forget_class", "Class to forget under class_wise"},
    {"--seed", "run.seeds", "Seed or comma-separated seeds"},
    {"--defender-hidden", "model.defender_hidden", "Comma-separated encoder widths"},
    {"--feature-dim", "model.feature_dim", "Defender feature width"},
    {"--attacker-layers", "model.attacker_layers", "Attention blocks in the attacker"},
    {"--attacker-heads", "model.attacker_heads", "Attention heads per block"},
    {"--sens-n", "unlearn.sens_n", "Noise draws per sensitivity estimate"},
    {"--sens-sigma", "unlearn.sens_sigma", "Noise standard deviation"},
    {"--pretrain-iters", "unlearn.pretrain_iters", "Attacker pretraining iterations"},
    {"--alpha", "unlearn.alpha", "Adversarial weight"},
    {"--beta", "unlearn.beta", "Feature-regularizer weight"},
    {"--lambda", "unlearn.lambda", "Off-diagonal weight inside the regularizer"},
    {"--epochs", "unlearn.epochs", "Unlearning epochs"},
    {"--alpha-cutoff", "unlearn.alpha_cutoff", "Iteration after which alpha is 0 (auto, none or N)"},
    {"--unlearn-lr", "unlearn.lr", "Defender learning rate during unlearning (auto or value)"},
    {"--method", "run.method", "ours, retrain, ft, ga, ff or iu"},
    {"--ff-scale", "baseline.ff_scale", "Fisher forgetting noise scale"},
    {"--ff-damping", "baseline.ff_damping", "Fisher forgetting damping"},
    {"--iu-damping", "baseline.iu_damping", "Influence unlearning damping"},
    {"--sparsity", "prune.sparsity", "One-shot magnitude pruning sparsity of theta_0"},
    {"--output", "run.output_dir", "Output directory"},
};

int run_command(const std::string& config_path, const std::vector<std::string>& flag_overrides,
                const std::vector<std::string>& overrides) {
    std::vector<std::string> all = flag_overrides;
    all.insert(all.end(), overrides.begin(), overrides.end());
    const std::string text = config_path.empty() ? std::string() : advunlearn::io::read_file(config_path);
    const ExperimentConfig cfg = advunlearn::parse_config(text, all);
    const auto result = advunlearn::run_experiment(cfg);
    const std::vector<advunlearn::AggregateReport> rows{result.aggregate};
    std::cout << advunlearn::table_markdown(rows);
    return result.all_ok ? 0 : 1;
}

int report_command(const std::string& dir) {
    const auto rows = advunlearn::collect_aggregates(dir);
    if (rows.empty()) {
        std::cerr << "no aggregate.json found under " << dir << "\n";
        return 1;
    }
    const std::filesystem::path base(dir);
    advunlearn::io::write_file_atomic(base / "report.csv", advunlearn::table_csv(rows));
    advunlearn::io::write_file_atomic(base / "report.md", advunlearn::table_markdown(rows));
    std::cout << advunlearn::table_markdown(rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial machine unlearning experiments"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    auto* run = app.add_subcommand("run", "Run an experiment from a config file");
    std::string config_path;
    std::vector<std::string> overrides;
    run->add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
    run->add_option("--override", overrides, "section.key=value, applied last")->take_all();
    std::vector<std::string> flag_values(std::size(kValueFlags));
    std::vector<CLI::Option*> flag_opts;
    for (std::size_t i = 0; i < std::size(kValueFlags); ++i) {
        flag_opts.push_back(run->add_option(kValueFlags[i].flag, flag_values[i], kValueFlags[i].help));
    }
    bool non_saturating = true;
    auto* ns_flag = run->add_flag("--non-saturating,!--saturating", non_saturating,
                                  "Label-flipped adversarial term (default) or the plain min-max term");

    auto* report = app.add_subcommand("report", "Tabulate aggregate reports under a directory");
    std::string report_dir;
    report->add_option("--dir", report_dir, "Outputs directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*run) {
            std::vector<std::string> from_flags;
            for (std::size_t i = 0; i < flag_opts.size(); ++i) {
                if (flag_opts[i]->count() == 0) {
                    continue;
                }
                if (std::string(kValueFlags[i].key) == "data.path") {
                    from_flags.emplace_back("data.source=file");
                }
                from_flags.push_back(std::string(kValueFlags[i].key) + "=" + flag_values[i]);
            }
            if (ns_flag->count() > 0) {
                from_flags.push_back(std::string("unlearn.non_saturating=") + (non_saturating ? "true" : "false"));
            }
            return run_command(config_path, from_flags, overrides);
        }
        return report_command(report_dir);
    } catch (const advunlearn::ConfigError& e) {
        spdlog::error("configuration error: {}", e.what());
        return 2;
    } catch (const advunlearn::ParseError& e) {
        spdlog::error("parse error: {}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 3;
    }
}
