#include "advunlearn/harness/experiment.hpp"

#include <chrono>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "advunlearn/baselines.hpp"
#include "advunlearn/errors.hpp"
#include "advunlearn/nn/checkpoint.hpp"
#include "advunlearn/pruning.hpp"
#include "advunlearn/util/io.hpp"

namespace advunlearn {

namespace {

LabeledDataset subset(const LabeledDataset& ds, const IndexList& idx) {
    LabeledDataset out;
    out.features = ds.rows(idx);
    out.labels = ds.labels_at(idx);
    out.num_classes = ds.num_classes;
    return out;
}

IndexList all_indices(std::size_t n) {
    IndexList idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

nlohmann::json splits_json(const SplitSet& s) {
    return {{"scheme", to_string(s.scheme.kind)},
            {"fraction", s.scheme.fraction},
            {"class_id", s.scheme.class_id},
            {"seed", s.scheme.seed},
            {"retain", s.retain},
            {"forget", s.forget},
            {"validation", s.validation},
            {"test", s.test}};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    io::write_file_atomic(path, j.dump(2) + "\n");
}

double minutes_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::ratio<60>>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

PreparedData prepare_data(const DataSpec& spec) {
    PreparedData out;
    if (spec.source == DataSource::synthetic) {
        out.train = gen_synthetic(spec.num_classes, spec.train_per_class, spec.dim, spec.spread, spec.data_seed);
        out.eval = gen_synthetic_pool(spec.num_classes, spec.eval_per_class, spec.dim, spec.spread, spec.data_seed,
                                      derive_seed(spec.data_seed, 1));
    } else {
        const std::optional<int> declared =
            spec.declared_classes > 0 ? std::optional<int>(spec.declared_classes) : std::nullopt;
        LabeledDataset full = load_dataset(spec.path, spec.format, declared);
        if (!spec.eval_path.empty()) {
            out.train = std::move(full);
            out.eval = load_dataset(spec.eval_path, spec.format, out.train.num_classes);
        } else {
            IndexList order = all_indices(full.size());
            Rng rng(derive_seed(spec.data_seed, 7));
            std::shuffle(order.begin(), order.end(), rng);
            const auto n_eval = static_cast<std::size_t>(
                std::llround(spec.eval_fraction * static_cast<double>(full.size())));
            if (n_eval < 2 || n_eval >= full.size()) {
                throw ConfigError("data.eval_fraction leaves an empty train or eval pool");
            }
            IndexList eval_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval));
            IndexList train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_eval), order.end());
            std::sort(eval_idx.begin(), eval_idx.end());
            std::sort(train_idx.begin(), train_idx.end());
            out.train = subset(full, train_idx);
            out.eval = subset(full, eval_idx);
        }
    }
    if (spec.standardize) {
        const Standardizer st = Standardizer::fit(out.train);
        st.apply(out.train);
        st.apply(out.eval);
    }
    out.train.validate();
    out.eval.validate();
    return out;
}

std::uint64_t stage_seed(std::uint64_t seed, Stage stage) {
    return derive_seed(seed, static_cast<std::uint64_t>(stage));
}

StageManifest::StageManifest(std::optional<std::filesystem::path> file) : file_(std::move(file)) {
    doc_ = {{"stages", nlohmann::json::array()}};
}

void StageManifest::record(const std::string& stage, const std::vector<std::string>& inputs,
                           const std::vector<std::string>& outputs) {
    for (const auto& in : inputs) {
        if (std::find(produced_.begin(), produced_.end(), in) == produced_.end()) {
            throw ConfigError("stage '" + stage + "' reads '" + in + "' which no earlier stage produced");
        }
    }
    const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
    doc_["stages"].push_back({{"order", doc_["stages"].size()},
                              {"stage", stage},
                              {"inputs", inputs},
                              {"outputs", outputs},
                              {"finished_unix_ms", wall}});
    produced_.insert(produced_.end(), outputs.begin(), outputs.end());
    if (file_) {
        write_json(*file_, doc_);
    }
}

SeedRun run_seed(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed,
                 const std::optional<std::filesystem::path>& seed_dir) {
    cfg.validate();
    SeedRun run;
    StageManifest manifest(seed_dir ? std::optional(*seed_dir / "manifest.json") : std::nullopt);
    auto out_path = [&](const char* name) { return *seed_dir / name; };

    // splits
    ForgetScheme scheme = cfg.scheme;
    scheme.seed = stage_seed(seed, Stage::splits);
    run.splits = make_splits(data.train, data.eval, scheme);
    if (seed_dir) {
        write_json(out_path("splits.json"), splits_json(run.splits));
    }
    manifest.record("splits", {}, {"splits.json"});

    // theta_0
    DefenderArch arch = cfg.defender;
    arch.input_dim = data.train.dim();
    arch.num_classes = data.train.num_classes;
    TrainCfg pre = cfg.pretrain;
    pre.seed = stage_seed(seed, Stage::theta0_train);
    run.theta0 = train_model(arch, data.train, all_indices(data.train.size()), pre,
                             stage_seed(seed, Stage::theta0_init));
    if (seed_dir) {
        save_checkpoint(run.theta0.params(), out_path("theta0.ckpt"));
    }
    manifest.record("theta0", {"splits.json"}, {"theta0.ckpt"});

    // pruning
    std::optional<SparsityMask> mask;
    std::string theta0_name = "theta0.ckpt";
    if (cfg.sparsity > 0.0) {
        mask = omp_mask(run.theta0.params(), cfg.sparsity);
        apply_mask(run.theta0.params(), *mask);
        TrainCfg ft = cfg.pretrain;
        ft.epochs = cfg.prune_finetune_epochs;
        ft.seed = stage_seed(seed, Stage::prune_finetune);
        train_epochs(run.theta0, data.train, all_indices(data.train.size()), ft);
        theta0_name = "theta0_pruned.ckpt";
        if (seed_dir) {
            save_checkpoint(run.theta0.params(), out_path("theta0_pruned.ckpt"));
        }
        manifest.record("prune", {"theta0.ckpt"}, {theta0_name});
    }

    auto fresh_model = [&](Stage init) {
        DefenderModel m(arch, stage_seed(seed, init));
        if (mask) {
            apply_mask(m.params(), *mask);
        }
        return m;
    };
    auto train_retrain = [&](Stage init, Stage train) {
        DefenderModel m = fresh_model(init);
        TrainCfg rc = cfg.baseline.retrain;
        rc.seed = stage_seed(seed, train);
        train_epochs(m, data.train, run.splits.retain, rc);
        return m;
    };

    // unlearning method
    const auto start = std::chrono::steady_clock::now();
    const UnlearnData udata{&data.train, &data.eval, &run.splits};
    switch (cfg.method) {
        case Method::ours: {
            UnlearnConfig ucfg = cfg.unlearn_config(seed);
            if (cfg.save_checkpoints && seed_dir) {
                ucfg.checkpoint_dir = *seed_dir / "epochs";
            }
            auto result = run_unlearning(run.theta0, udata, ucfg);
            run.unlearned = std::move(result.model);
            run.history = std::move(result.history);
            break;
        }
        case Method::retrain:
            run.unlearned = train_retrain(Stage::gold_init, Stage::gold_train);
            break;
        case Method::ft: {
            TrainCfg c = cfg.baseline.finetune;
            c.seed = stage_seed(seed, Stage::method_train);
            run.unlearned = finetune(run.theta0, data.train, run.splits.retain, c);
            break;
        }
        case Method::ga: {
            TrainCfg c = cfg.baseline.ascent;
            c.seed = stage_seed(seed, Stage::method_train);
            run.unlearned = gradient_ascent(run.theta0, data.train, run.splits.forget, c);
            break;
        }
        case Method::ff:
            run.unlearned = fisher_forget(run.theta0, data.train, run.splits.retain, cfg.baseline.ff_scale,
                                          cfg.baseline.ff_damping, stage_seed(seed, Stage::method_noise));
            break;
        case Method::iu:
            run.unlearned = influence_unlearn(run.theta0, data.train, all_indices(data.train.size()),
                                              run.splits.forget, cfg.baseline.iu_damping);
            break;
    }
    run.runtime_minutes = minutes_since(start);
    std::vector<std::string> method_out{"theta_u.ckpt"};
    if (seed_dir) {
        save_checkpoint(run.unlearned.params(), out_path("theta_u.ckpt"));
        if (run.history) {
            io::write_file_atomic(out_path("history.csv"), run.history->to_csv());
            method_out.push_back("history.csv");
        }
    }
    manifest.record("method", {"splits.json", theta0_name}, method_out);

    // evaluation
    const EvalCfg ecfg = cfg.eval_config(seed);
    run.report = evaluate_model(run.unlearned, data.train, data.eval, run.splits, ecfg);
    run.report.method = cfg.label();
    run.report.seed = seed;
    if (cfg.gold) {
        const DefenderModel gold =
            cfg.method == Method::retrain ? run.unlearned : train_retrain(Stage::gold_init, Stage::gold_train);
        MetricsReport gold_report = evaluate_model(gold, data.train, data.eval, run.splits, ecfg);
        gold_report.method = "retrain";
        gold_report.seed = seed;
        run.report.avg_disparity = avg_disparity(run.report, gold_report);
        if (seed_dir) {
            save_checkpoint(gold.params(), out_path("gold.ckpt"));
            write_json(out_path("gold_metrics.json"), to_json(gold_report));
        }
        manifest.record("gold", {"splits.json"}, {"gold.ckpt", "gold_metrics.json"});
    }
    run.report.validate();
    if (seed_dir) {
        write_json(out_path("metrics.json"), to_json(run.report));
        write_json(out_path("timing.json"), {{"seed", seed}, {"runtime_minutes", run.runtime_minutes}});
    }
    std::vector<std::string> eval_in{"theta_u.ckpt"};
    if (cfg.gold) {
        eval_in.push_back("gold_metrics.json");
    }
    manifest.record("evaluate", eval_in, {"metrics.json", "timing.json"});
    return run;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.output_dir);
    io::write_file_atomic(cfg.output_dir / "config.ini", serialize_config(cfg));

    const PreparedData data = prepare_data(cfg.data);
    ExperimentResult result;
    for (std::uint64_t seed : cfg.seeds) {
        SeedOutcome o;
        o.seed = seed;
        const auto dir = cfg.output_dir / fmt::format("seed_{}", seed);
        try {
            std::filesystem::create_directories(dir);
            SeedRun run = run_seed(cfg, data, seed, dir);
            o.report = std::move(run.report);
            o.runtime_minutes = run.runtime_minutes;
            o.ok = true;
            spdlog::info("seed {}: UA {:.2f} MIA {:.2f} RA {:.2f} TA {:.2f}", seed, *o.report.ua,
                         *o.report.mia_efficacy, *o.report.ra, *o.report.ta);
        } catch (const std::exception& e) {
            o.error = e.what();
            spdlog::error("seed {} failed: {}", seed, e.what());
        }
        result.outcomes.push_back(std::move(o));
    }
    result.all_ok = std::all_of(result.outcomes.begin(), result.outcomes.end(), [](const auto& o) { return o.ok; });
    if (!result.all_ok) {
        spdlog::warn("aggregating over the successful seeds only");
    }
    result.aggregate = aggregate(cfg.label(), result.outcomes);
    write_json(cfg.output_dir / "aggregate.json", to_json(result.aggregate));
    const std::vector<AggregateReport> rows{result.aggregate};
    io::write_file_atomic(cfg.output_dir / "summary.csv", table_csv(rows));
    return result;
}

}  // namespace advunlearn
