#include "advunlearn/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "advunlearn/errors.hpp"
#include "advunlearn/util/io.hpp"

namespace advunlearn {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ParseError(fmt::format("config key '{}': cannot parse '{}' as {}", key, value, expected));
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto s = trim(v);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
        bad_value(key, v, "a real number");
    }
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto s = trim(v);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
        bad_value(key, v, "a nonnegative integer");
    }
    return out;
}

long long to_i64(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto s = trim(v);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
        bad_value(key, v, "an integer");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    const auto s = trim(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    bad_value(key, v, "a boolean");
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <class T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out += (i ? "," : "") + fmt::format("{}", xs[i]);
    }
    return out;
}

struct Field {
    std::string section;
    std::string key;
    std::function<void(const std::string& qualified, const std::string& value)> set;
    std::function<std::string()> get;
};

#define ADV_FIELD(sec, name, setter, getter) \
    fields.push_back({sec, name, [&]([[maybe_unused]] const std::string& q, const std::string& v) { setter; }, [&] { return getter; }})

std::vector<Field> fields_of(ExperimentConfig& c) {
    std::vector<Field> fields;

    ADV_FIELD("data", "source",
              c.data.source = trim(v) == "synthetic" ? DataSource::synthetic
                              : trim(v) == "file"     ? DataSource::file
                                                      : (bad_value(q, v, "'synthetic' or 'file'"), DataSource::file),
              std::string(c.data.source == DataSource::synthetic ? "synthetic" : "file"));
    ADV_FIELD("data", "num_classes", c.data.num_classes = static_cast<int>(to_i64(q, v)),
              std::to_string(c.data.num_classes));
    ADV_FIELD("data", "train_per_class", c.data.train_per_class = to_u64(q, v), std::to_string(c.data.train_per_class));
    ADV_FIELD("data", "eval_per_class", c.data.eval_per_class = to_u64(q, v), std::to_string(c.data.eval_per_class));
    ADV_FIELD("data", "dim", c.data.dim = to_u64(q, v), std::to_string(c.data.dim));
    ADV_FIELD("data", "spread", c.data.spread = to_double(q, v), fmt_double(c.data.spread));
    ADV_FIELD("data", "data_seed", c.data.data_seed = to_u64(q, v), std::to_string(c.data.data_seed));
    ADV_FIELD("data", "path", c.data.path = trim(v), c.data.path.string());
    ADV_FIELD("data", "eval_path", c.data.eval_path = trim(v), c.data.eval_path.string());
    ADV_FIELD("data", "format",
              c.data.format = trim(v) == "csv"      ? DataFormat::csv
                              : trim(v) == "binary" ? DataFormat::binary
                                                    : (bad_value(q, v, "'csv' or 'binary'"), DataFormat::csv),
              std::string(c.data.format == DataFormat::csv ? "csv" : "binary"));
    ADV_FIELD("data", "declared_classes", c.data.declared_classes = static_cast<int>(to_i64(q, v)),
              std::to_string(c.data.declared_classes));
    ADV_FIELD("data", "eval_fraction", c.data.eval_fraction = to_double(q, v), fmt_double(c.data.eval_fraction));
    ADV_FIELD("data", "standardize", c.data.standardize = to_bool(q, v), fmt_bool(c.data.standardize));

    ADV_FIELD("split", "scheme", c.scheme.kind = forget_kind_from_string(trim(v)), to_string(c.scheme.kind));
    ADV_FIELD("split", "forget_fraction", c.scheme.fraction = to_double(q, v), fmt_double(c.scheme.fraction));
    ADV_FIELD("split", "forget_class", c.scheme.class_id = static_cast<int>(to_i64(q, v)),
              std::to_string(c.scheme.class_id));

    ADV_FIELD(
        "model", "defender_hidden",
        {
            c.defender.hidden.clear();
            for (const auto& s : split_list(v)) c.defender.hidden.push_back(to_u64(q, s));
        },
        join(c.defender.hidden));
    ADV_FIELD("model", "feature_dim", c.defender.feature_dim = to_u64(q, v), std::to_string(c.defender.feature_dim));
    ADV_FIELD("model", "attacker_layers", c.attention.num_layers = to_u64(q, v),
              std::to_string(c.attention.num_layers));
    ADV_FIELD("model", "attacker_heads", c.attention.num_heads = to_u64(q, v), std::to_string(c.attention.num_heads));
    ADV_FIELD("model", "attacker_dim", c.attention.model_dim = to_u64(q, v), std::to_string(c.attention.model_dim));

    ADV_FIELD("train", "lr", c.pretrain.lr = to_double(q, v), fmt_double(c.pretrain.lr));
    ADV_FIELD("train", "momentum", c.pretrain.momentum = to_double(q, v), fmt_double(c.pretrain.momentum));
    ADV_FIELD("train", "epochs", c.pretrain.epochs = to_u64(q, v), std::to_string(c.pretrain.epochs));
    ADV_FIELD("train", "batch_size", c.pretrain.batch_size = to_u64(q, v), std::to_string(c.pretrain.batch_size));

    ADV_FIELD("unlearn", "alpha", c.alpha = to_double(q, v), fmt_double(c.alpha));
    ADV_FIELD("unlearn", "beta", c.beta = to_double(q, v), fmt_double(c.beta));
    ADV_FIELD("unlearn", "lambda", c.lambda = to_double(q, v), fmt_double(c.lambda));
    ADV_FIELD(
        "unlearn", "lr",
        {
            if (trim(v) == "auto") c.unlearn_lr.reset();
            else c.unlearn_lr = to_double(q, v);
        },
        c.unlearn_lr ? fmt_double(*c.unlearn_lr) : std::string("auto"));
    ADV_FIELD("unlearn", "attacker_lr", c.attacker_lr = to_double(q, v), fmt_double(c.attacker_lr));
    ADV_FIELD("unlearn", "epochs", c.unlearn_epochs = to_u64(q, v), std::to_string(c.unlearn_epochs));
    ADV_FIELD("unlearn", "batch_size", c.unlearn_batch = to_u64(q, v), std::to_string(c.unlearn_batch));
    ADV_FIELD("unlearn", "non_saturating", c.non_saturating = to_bool(q, v), fmt_bool(c.non_saturating));
    ADV_FIELD(
        "unlearn", "alpha_cutoff",
        {
            const auto s = trim(v);
            if (s != "auto" && s != "none") (void)to_u64(q, s);
            c.alpha_cutoff = s;
        },
        c.alpha_cutoff);
    ADV_FIELD("unlearn", "attacker_steps", c.attacker_steps = to_u64(q, v), std::to_string(c.attacker_steps));
    ADV_FIELD("unlearn", "pretrain_iters", c.pretrain_iters = to_u64(q, v), std::to_string(c.pretrain_iters));
    ADV_FIELD("unlearn", "sens_n", c.sens_n = to_u64(q, v), std::to_string(c.sens_n));
    ADV_FIELD("unlearn", "sens_sigma", c.sens_sigma = to_double(q, v), fmt_double(c.sens_sigma));
    ADV_FIELD("unlearn", "sens_norm",
              c.sens_norm = trim(v) == "elementwise" ? SensitivityNorm::elementwise
                            : trim(v) == "l2"        ? SensitivityNorm::l2
                                                     : (bad_value(q, v, "'elementwise' or 'l2'"), SensitivityNorm::l2),
              std::string(c.sens_norm == SensitivityNorm::elementwise ? "elementwise" : "l2"));
    ADV_FIELD("unlearn", "early_stop", c.early_stop = to_bool(q, v), fmt_bool(c.early_stop));
    ADV_FIELD("unlearn", "record_history", c.record_history = to_bool(q, v), fmt_bool(c.record_history));
    ADV_FIELD("unlearn", "save_checkpoints", c.save_checkpoints = to_bool(q, v), fmt_bool(c.save_checkpoints));

    ADV_FIELD("baseline", "retrain_lr", c.baseline.retrain.lr = to_double(q, v), fmt_double(c.baseline.retrain.lr));
    ADV_FIELD("baseline", "retrain_epochs", c.baseline.retrain.epochs = to_u64(q, v),
              std::to_string(c.baseline.retrain.epochs));
    ADV_FIELD("baseline", "ft_lr", c.baseline.finetune.lr = to_double(q, v), fmt_double(c.baseline.finetune.lr));
    ADV_FIELD("baseline", "ft_epochs", c.baseline.finetune.epochs = to_u64(q, v),
              std::to_string(c.baseline.finetune.epochs));
    ADV_FIELD("baseline", "ga_lr", c.baseline.ascent.lr = to_double(q, v), fmt_double(c.baseline.ascent.lr));
    ADV_FIELD("baseline", "ga_epochs", c.baseline.ascent.epochs = to_u64(q, v),
              std::to_string(c.baseline.ascent.epochs));
    ADV_FIELD("baseline", "ff_scale", c.baseline.ff_scale = to_double(q, v), fmt_double(c.baseline.ff_scale));
    ADV_FIELD("baseline", "ff_damping", c.baseline.ff_damping = to_double(q, v), fmt_double(c.baseline.ff_damping));
    ADV_FIELD("baseline", "iu_damping", c.baseline.iu_damping = to_double(q, v), fmt_double(c.baseline.iu_damping));

    ADV_FIELD("prune", "sparsity", c.sparsity = to_double(q, v), fmt_double(c.sparsity));
    ADV_FIELD("prune", "finetune_epochs", c.prune_finetune_epochs = to_u64(q, v),
              std::to_string(c.prune_finetune_epochs));

    ADV_FIELD("eval", "svm_feature",
              c.svm_feature = trim(v) == "confidence"         ? MiaFeature::confidence
                              : trim(v) == "label_confidence" ? MiaFeature::label_confidence
                              : trim(v) == "probabilities"    ? MiaFeature::probabilities
                                                              : (bad_value(q, v, "'confidence', 'label_confidence' or 'probabilities'"),
                                                                 MiaFeature::confidence),
              to_string(c.svm_feature));
    ADV_FIELD("eval", "svm_members",
              c.svm_members = trim(v) == "train_pool" ? SvmMembers::train_pool
                              : trim(v) == "retain"   ? SvmMembers::retain
                                                      : (bad_value(q, v, "'train_pool' or 'retain'"), SvmMembers::retain),
              std::string(c.svm_members == SvmMembers::train_pool ? "train_pool" : "retain"));
    ADV_FIELD("eval", "svm_reg", c.svm_reg = to_double(q, v), fmt_double(c.svm_reg));
    ADV_FIELD("eval", "svm_passes", c.svm_passes = to_u64(q, v), std::to_string(c.svm_passes));
    ADV_FIELD("eval", "metric_attacks", c.metric_attacks = to_bool(q, v), fmt_bool(c.metric_attacks));

    ADV_FIELD("run", "method", c.method = method_from_string(trim(v)), to_string(c.method));
    ADV_FIELD(
        "run", "seeds",
        {
            c.seeds.clear();
            for (const auto& s : split_list(v)) c.seeds.push_back(to_u64(q, s));
        },
        join(c.seeds));
    ADV_FIELD("run", "output_dir", c.output_dir = trim(v), c.output_dir.string());
    ADV_FIELD("run", "gold", c.gold = to_bool(q, v), fmt_bool(c.gold));
    return fields;
}

#undef ADV_FIELD

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) {
        throw ConfigError(key + " " + what);
    }
}

}  // namespace

std::string to_string(Method m) {
    switch (m) {
        case Method::ours: return "ours";
        case Method::retrain: return "retrain";
        case Method::ft: return "ft";
        case Method::ga: return "ga";
        case Method::ff: return "ff";
        case Method::iu: return "iu";
    }
    return "unknown";
}

Method method_from_string(const std::string& s) {
    for (auto m : {Method::ours, Method::retrain, Method::ft, Method::ga, Method::ff, Method::iu}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw ParseError("config key 'run.method': unknown method '" + s + "' (ours, retrain, ft, ga, ff, iu)");
}

void ExperimentConfig::validate() const {
    if (data.source == DataSource::synthetic) {
        require(data.num_classes >= 2, "data.num_classes", "must be at least 2");
        require(data.train_per_class >= 1, "data.train_per_class", "must be positive");
        require(data.eval_per_class >= 1, "data.eval_per_class", "must be positive");
        require(data.dim >= 2, "data.dim", "must be at least 2");
        require(std::isfinite(data.spread) && data.spread >= 0.0, "data.spread", "must be >= 0");
    } else {
        require(!data.path.empty(), "data.path", "is required when data.source = file");
        require(data.declared_classes >= 0, "data.declared_classes", "must be >= 0");
        require(data.eval_fraction > 0.0 && data.eval_fraction < 1.0, "data.eval_fraction", "must lie in (0, 1)");
    }
    if (scheme.kind == ForgetKind::random_fraction) {
        require(scheme.fraction > 0.0 && scheme.fraction < 1.0, "split.forget_fraction", "must lie in (0, 1)");
    } else {
        require(scheme.class_id >= 0, "split.forget_class", "must be >= 0");
        if (data.source == DataSource::synthetic) {
            require(scheme.class_id < data.num_classes, "split.forget_class", "must be < data.num_classes");
        }
    }
    require(!defender.hidden.empty(), "model.defender_hidden", "must list at least one width");
    for (auto h : defender.hidden) {
        require(h > 0, "model.defender_hidden", "widths must be positive");
    }
    require(defender.feature_dim > 0, "model.feature_dim", "must be positive");
    try {
        attention.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("model.attacker_*: ") + e.what());
    }
    require(pretrain.lr > 0.0, "train.lr", "must be positive");
    require(pretrain.momentum >= 0.0 && pretrain.momentum < 1.0, "train.momentum", "must lie in [0, 1)");
    require(pretrain.batch_size > 0, "train.batch_size", "must be positive");

    require(std::isfinite(alpha) && alpha >= 0.0, "unlearn.alpha", "must be >= 0");
    require(std::isfinite(beta) && beta >= 0.0, "unlearn.beta", "must be >= 0");
    require(std::isfinite(lambda) && lambda >= 0.0, "unlearn.lambda", "must be >= 0");
    require(!unlearn_lr || *unlearn_lr > 0.0, "unlearn.lr", "must be positive");
    require(attacker_lr > 0.0, "unlearn.attacker_lr", "must be positive");
    require(unlearn_batch >= 2, "unlearn.batch_size", "must be at least 2");
    require(attacker_steps >= 1, "unlearn.attacker_steps", "must be at least 1");
    require(sens_n >= 1, "unlearn.sens_n", "must be at least 1");
    require(std::isfinite(sens_sigma) && sens_sigma >= 0.0, "unlearn.sens_sigma", "must be >= 0");

    try {
        baseline.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("baseline.") + e.what());
    }
    require(sparsity >= 0.0 && sparsity < 1.0, "prune.sparsity", "must lie in [0, 1)");
    require(svm_reg > 0.0, "eval.svm_reg", "must be positive");
    require(svm_passes > 0, "eval.svm_passes", "must be positive");
    require(!seeds.empty(), "run.seeds", "must list at least one seed");
}

UnlearnConfig ExperimentConfig::unlearn_config(std::uint64_t seed) const {
    UnlearnConfig u = UnlearnConfig::defaults_for(scheme.kind, sparsity > 0.0);
    u.alpha = alpha;
    u.beta = beta;
    u.lambda = lambda;
    if (unlearn_lr) {
        u.eta_d = *unlearn_lr;
    }
    u.eta_a = attacker_lr;
    u.momentum = pretrain.momentum;
    u.batch_size = unlearn_batch;
    u.epochs = unlearn_epochs;
    u.non_saturating = non_saturating;
    if (alpha_cutoff == "none") {
        u.alpha_cutoff_iters.reset();
    } else if (alpha_cutoff != "auto") {
        u.alpha_cutoff_iters = static_cast<std::size_t>(to_u64("unlearn.alpha_cutoff", alpha_cutoff));
    }
    u.attacker_steps = attacker_steps;
    u.pretrain_iters = pretrain_iters;
    u.sensitivity.n = sens_n;
    u.sensitivity.sigma = sens_sigma;
    u.sensitivity.norm = sens_norm;
    u.attention = attention;
    u.early_stop = early_stop;
    u.record_metrics = record_history;
    u.seed = derive_seed(seed, 0xE9);
    return u;
}

EvalCfg ExperimentConfig::eval_config(std::uint64_t seed) const {
    EvalCfg e;
    e.mia.feature = svm_feature;
    e.mia.svm.reg = svm_reg;
    e.mia.svm.passes = svm_passes;
    e.mia.svm.seed = derive_seed(seed, 0xE7);
    e.svm_members = svm_members;
    e.metric_attacks = metric_attacks;
    e.seed = seed;
    return e;
}

std::string ExperimentConfig::label() const {
    if (method == Method::ours && beta == 0.0) {
        return "ours (no V_ss)";
    }
    return to_string(method);
}

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) {
            throw ParseError("override '" + o + "' is not of the form section.key=value");
        }
        const auto key = trim(o.substr(0, eq));
        if (key.find('.') == std::string::npos) {
            throw ParseError("override key '" + key + "' must be section.key");
        }
        tree.put(key, trim(o.substr(eq + 1)));
    }

    ExperimentConfig cfg;
    auto fields = fields_of(cfg);
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ParseError("config key '" + section + "' must be inside a [section]");
        }
        for (const auto& [key, value] : body) {
            const std::string qualified = section + "." + key;
            auto it = std::find_if(fields.begin(), fields.end(),
                                   [&](const Field& f) { return f.section == section && f.key == key; });
            if (it == fields.end()) {
                throw ParseError("unknown config key '" + qualified + "'");
            }
            it->set(qualified, value.data());
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config(const std::string& text) { return parse_config(text, {}); }

ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config(io::read_file(path));
}

std::string serialize_config(const ExperimentConfig& cfg) {
    ExperimentConfig copy = cfg;
    std::string out;
    std::string current;
    for (const auto& f : fields_of(copy)) {
        if (f.section != current) {
            out += (current.empty() ? "" : "\n") + fmt::format("[{}]\n", f.section);
            current = f.section;
        }
        out += fmt::format("{} = {}\n", f.key, f.get());
    }
    return out;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return serialize_config(a) == serialize_config(b);
}

}  // namespace advunlearn
