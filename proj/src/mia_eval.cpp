#include "advunlearn/mia_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "advunlearn/errors.hpp"

namespace advunlearn {

namespace {

std::span<const double> row_span(const Matrix& m, Eigen::Index r) {
    return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

int argmax(std::span<const double> p) {
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double safe_log(double x) { return std::log(std::max(x, kProbFloor)); }

void check_pct(const char* name, const std::optional<double>& v) {
    if (v && !(*v >= 0.0 && *v <= 100.0)) {
        throw EvaluationError(std::string(name) + " outside [0, 100]: " + std::to_string(*v));
    }
}

}  // namespace

double accuracy_from_probs(const Matrix& probs, std::span<const int> labels) {
    if (probs.rows() == 0) {
        throw EvaluationError("accuracy of an empty subset");
    }
    if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
        throw ShapeError("accuracy: probability rows and labels differ in length");
    }
    std::size_t hits = 0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        hits += argmax(row_span(probs, r)) == labels[static_cast<std::size_t>(r)] ? 1 : 0;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(probs.rows());
}

double accuracy(const DefenderModel& model, const LabeledDataset& data, std::span<const std::size_t> idx) {
    if (idx.empty()) {
        throw EvaluationError("accuracy of an empty subset");
    }
    const auto labels = data.labels_at(idx);
    return accuracy_from_probs(model.forward(data.rows(idx)), labels);
}

double roc_auc(std::span<const double> positives, std::span<const double> negatives) {
    if (positives.empty() || negatives.empty()) {
        throw EvaluationError("roc_auc needs both positives and negatives");
    }
    struct Item {
        double score;
        bool pos;
    };
    std::vector<Item> all;
    all.reserve(positives.size() + negatives.size());
    for (double s : positives) all.push_back({s, true});
    for (double s : negatives) all.push_back({s, false});
    std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

    // Mann-Whitney U with mid-ranks for ties.
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (all[k].pos) rank_sum += mid;
        }
        i = j;
    }
    const double np = static_cast<double>(positives.size());
    const double nn = static_cast<double>(negatives.size());
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// ---------------------------------------------------------------------------
// SVM

double LinearSvm::decision(const RowVector& x) const {
    const RowVector z = (x - mean).cwiseQuotient(scale);
    return z.dot(w.transpose()) + bias;
}

std::vector<std::uint8_t> LinearSvm::predict(const Matrix& x) const {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        out[static_cast<std::size_t>(r)] = decision(x.row(r)) >= 0.0 ? 1 : 0;
    }
    return out;
}

LinearSvm fit_svm(const Matrix& features, std::span<const int> labels, const SvmCfg& cfg) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (n != labels.size()) {
        throw ShapeError("fit_svm: feature rows and labels differ in length");
    }
    if (!(cfg.reg > 0.0) || cfg.passes == 0) {
        throw ConfigError("fit_svm: reg must be positive and passes nonzero");
    }
    const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw EvaluationError("fit_svm: both members and non-members are required");
    }

    LinearSvm svm;
    svm.mean = features.colwise().mean();
    const Matrix centered = features.rowwise() - svm.mean;
    svm.scale = (centered.array().square().colwise().sum() / static_cast<double>(n)).sqrt();
    for (Eigen::Index c = 0; c < svm.scale.size(); ++c) {
        if (svm.scale[c] <= 0.0) svm.scale[c] = 1.0;
    }
    const Matrix z = centered.array().rowwise() / svm.scale.array();

    const Eigen::Index d = z.cols();
    std::vector<double> weight(n, 1.0);
    if (cfg.balanced) {
        for (std::size_t i = 0; i < n; ++i) {
            weight[i] = static_cast<double>(n) / (2.0 * static_cast<double>(labels[i] == 1 ? n_pos : n_neg));
        }
    }

    // Bias is folded in as a constant feature.
    Vector theta = Vector::Zero(d + 1);
    Vector averaged = Vector::Zero(d + 1);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.seed);
    const double radius = 1.0 / std::sqrt(cfg.reg);
    std::size_t t = 0;
    for (std::size_t pass = 0; pass < cfg.passes; ++pass) {
        std::shuffle(order.begin(), order.end(), rng);
        const bool last = pass + 1 == cfg.passes;
        for (std::size_t i : order) {
            ++t;
            const double eta = 1.0 / (cfg.reg * static_cast<double>(t));
            const double y = labels[i] == 1 ? 1.0 : -1.0;
            const auto zi = z.row(static_cast<Eigen::Index>(i));
            const double margin = y * (zi.dot(theta.head(d).transpose()) + theta[d]);
            theta *= 1.0 - eta * cfg.reg;
            if (margin < 1.0) {
                theta.head(d) += (eta * weight[i] * y) * zi.transpose();
                theta[d] += eta * weight[i] * y;
            }
            const double norm = theta.norm();
            if (norm > radius) theta *= radius / norm;
            if (last) averaged += theta;
        }
    }
    averaged /= static_cast<double>(n);
    svm.w = averaged.head(d);
    svm.bias = averaged[d];

    const auto pred = svm.predict(features);
    const auto members = static_cast<std::size_t>(std::count(pred.begin(), pred.end(), std::uint8_t{1}));
    if (members == 0 || members == n) {
        spdlog::warn("fit_svm: degenerate single-class fit, using midpoint of class means");
        RowVector mu_pos = RowVector::Zero(d);
        RowVector mu_neg = RowVector::Zero(d);
        for (std::size_t i = 0; i < n; ++i) {
            (labels[i] == 1 ? mu_pos : mu_neg) += z.row(static_cast<Eigen::Index>(i));
        }
        mu_pos /= static_cast<double>(n_pos);
        mu_neg /= static_cast<double>(n_neg);
        svm.w = (mu_pos - mu_neg).transpose();
        svm.bias = -0.5 * (mu_pos + mu_neg).dot(svm.w.transpose());
        svm.fallback = true;
    }
    return svm;
}

std::string to_string(MiaFeature f) {
    switch (f) {
        case MiaFeature::confidence: return "confidence";
        case MiaFeature::label_confidence: return "label_confidence";
        case MiaFeature::probabilities: return "probabilities";
    }
    return "unknown";
}

MiaFeature mia_feature_from_string(const std::string& s) {
    for (auto f : {MiaFeature::confidence, MiaFeature::label_confidence, MiaFeature::probabilities}) {
        if (to_string(f) == s) {
            return f;
        }
    }
    throw ConfigError("unknown MIA feature '" + s + "'");
}

Matrix mia_features(const Matrix& probs, std::span<const int> labels, MiaFeature feature) {
    if (feature == MiaFeature::probabilities) {
        return probs;
    }
    if (feature == MiaFeature::label_confidence && labels.size() != static_cast<std::size_t>(probs.rows())) {
        throw ShapeError("mia_features: one label per row required");
    }
    Matrix out(probs.rows(), 1);
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        out(r, 0) = feature == MiaFeature::confidence ? probs.row(r).maxCoeff()
                                                      : probs(r, labels[static_cast<std::size_t>(r)]);
    }
    return out;
}

namespace {

Matrix features_of(const DefenderModel& model, const LabeledDataset& pool, std::span<const std::size_t> idx,
                   MiaFeature feature) {
    return mia_features(model.forward(pool.rows(idx)), pool.labels_at(idx), feature);
}

}  // namespace

double efficacy_from_predictions(std::span<const std::uint8_t> member_predictions) {
    if (member_predictions.empty()) {
        throw EvaluationError("MIA-efficacy of an empty forget set");
    }
    const auto non = std::count(member_predictions.begin(), member_predictions.end(), std::uint8_t{0});
    return 100.0 * static_cast<double>(non) / static_cast<double>(member_predictions.size());
}

double mia_efficacy(const DefenderModel& model, const LabeledDataset& train_pool,
                    std::span<const std::size_t> members, const LabeledDataset& eval_pool,
                    std::span<const std::size_t> nonmembers, std::span<const std::size_t> forget,
                    const MiaEfficacyCfg& cfg) {
    if (forget.empty()) {
        throw EvaluationError("MIA-efficacy of an empty forget set");
    }
    const Matrix f_mem = features_of(model, train_pool, members, cfg.feature);
    const Matrix f_non = features_of(model, eval_pool, nonmembers, cfg.feature);
    Matrix x(f_mem.rows() + f_non.rows(), f_mem.cols());
    x << f_mem, f_non;
    std::vector<int> y(static_cast<std::size_t>(x.rows()), 0);
    std::fill_n(y.begin(), f_mem.rows(), 1);

    const LinearSvm svm = fit_svm(x, y, cfg.svm);
    const Matrix f_forget = features_of(model, train_pool, forget, cfg.feature);
    return efficacy_from_predictions(svm.predict(f_forget));
}

namespace {

std::pair<IndexList, IndexList> seeded_halves(std::span<const std::size_t> idx, std::uint64_t seed) {
    IndexList shuffled(idx.begin(), idx.end());
    Rng rng(seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto half = static_cast<std::ptrdiff_t>(shuffled.size() / 2);
    IndexList a(shuffled.begin(), shuffled.begin() + half);
    IndexList b(shuffled.begin() + half, shuffled.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return {a, b};
}

}  // namespace

double svm_distinguish_accuracy(const DefenderModel& model, const LabeledDataset& pool_a,
                                std::span<const std::size_t> a, const LabeledDataset& pool_b,
                                std::span<const std::size_t> b, const MiaEfficacyCfg& cfg) {
    if (a.size() < 2 || b.size() < 2) {
        throw EvaluationError("svm_distinguish_accuracy needs at least two samples per side");
    }
    const auto [a_fit, a_eval] = seeded_halves(a, derive_seed(cfg.svm.seed, 41));
    const auto [b_fit, b_eval] = seeded_halves(b, derive_seed(cfg.svm.seed, 42));
    const Matrix fa = features_of(model, pool_a, a_fit, cfg.feature);
    const Matrix fb = features_of(model, pool_b, b_fit, cfg.feature);
    Matrix x(fa.rows() + fb.rows(), fa.cols());
    x << fa, fb;
    std::vector<int> y(static_cast<std::size_t>(x.rows()), 0);
    std::fill_n(y.begin(), fa.rows(), 1);
    const LinearSvm svm = fit_svm(x, y, cfg.svm);

    const auto pa = svm.predict(features_of(model, pool_a, a_eval, cfg.feature));
    const auto pb = svm.predict(features_of(model, pool_b, b_eval, cfg.feature));
    const double tpr = static_cast<double>(std::count(pa.begin(), pa.end(), std::uint8_t{1})) /
                       static_cast<double>(pa.size());
    const double tnr = static_cast<double>(std::count(pb.begin(), pb.end(), std::uint8_t{0})) /
                       static_cast<double>(pb.size());
    return 0.5 * (tpr + tnr);
}

// ---------------------------------------------------------------------------
// Metric attacks

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::correctness: return "correctness";
        case AttackKind::confidence: return "confidence";
        case AttackKind::entropy: return "entropy";
        case AttackKind::modified_entropy: return "modified_entropy";
    }
    return "unknown";
}

double prediction_entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) h -= v * safe_log(v);
    return h;
}

double modified_entropy(std::span<const double> p, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= p.size()) {
        throw ShapeError("modified_entropy: label out of range");
    }
    double h = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (static_cast<int>(i) == label) {
            h -= (1.0 - p[i]) * safe_log(p[i]);
        } else {
            h -= p[i] * safe_log(1.0 - p[i]);
        }
    }
    return h;
}

double attack_score(AttackKind kind, std::span<const double> p, int label) {
    switch (kind) {
        case AttackKind::correctness: return argmax(p) == label ? 1.0 : 0.0;
        case AttackKind::confidence: return *std::max_element(p.begin(), p.end());
        case AttackKind::entropy: return prediction_entropy(p);
        case AttackKind::modified_entropy: return modified_entropy(p, label);
    }
    return 0.0;
}

namespace {

// Members score higher after orientation.
double oriented_score(AttackKind kind, std::span<const double> p, int label) {
    const double s = attack_score(kind, p, label);
    return (kind == AttackKind::entropy || kind == AttackKind::modified_entropy) ? -s : s;
}

double best_threshold(std::vector<double> mem, std::vector<double> non) {
    std::sort(mem.begin(), mem.end());
    std::sort(non.begin(), non.end());
    std::vector<double> all = mem;
    all.insert(all.end(), non.begin(), non.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    std::vector<double> candidates;
    candidates.push_back(all.front() - 1.0);
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
        candidates.push_back(0.5 * (all[i] + all[i + 1]));
    }
    candidates.push_back(all.back() + 1.0);

    double best = candidates.front();
    double best_acc = -1.0;
    for (double t : candidates) {
        // member iff score >= t
        const auto mem_hit = static_cast<double>(mem.end() - std::lower_bound(mem.begin(), mem.end(), t));
        const auto non_hit = static_cast<double>(std::lower_bound(non.begin(), non.end(), t) - non.begin());
        const double acc = 0.5 * (mem_hit / static_cast<double>(mem.size()) +
                                  non_hit / static_cast<double>(non.size()));
        if (acc > best_acc) {
            best_acc = acc;
            best = t;
        }
    }
    return best;
}

}  // namespace

bool ThresholdAttack::is_member(std::span<const double> p, int label) const {
    const double s = oriented_score(kind, p, label);
    const double t = (label >= 0 && static_cast<std::size_t>(label) < thresholds.size())
                         ? thresholds[static_cast<std::size_t>(label)]
                         : global_threshold;
    return s >= t;
}

ThresholdAttack calibrate_attack(AttackKind kind, const Matrix& member_probs,
                                 std::span<const int> member_labels, const Matrix& nonmember_probs,
                                 std::span<const int> nonmember_labels, int num_classes) {
    if (member_probs.rows() == 0 || nonmember_probs.rows() == 0) {
        throw EvaluationError("calibrate_attack: empty calibration set");
    }
    ThresholdAttack attack;
    attack.kind = kind;
    std::vector<std::vector<double>> mem(static_cast<std::size_t>(num_classes));
    std::vector<std::vector<double>> non(static_cast<std::size_t>(num_classes));
    std::vector<double> mem_all, non_all;
    for (Eigen::Index r = 0; r < member_probs.rows(); ++r) {
        const int y = member_labels[static_cast<std::size_t>(r)];
        const double s = oriented_score(kind, row_span(member_probs, r), y);
        mem[static_cast<std::size_t>(y)].push_back(s);
        mem_all.push_back(s);
    }
    for (Eigen::Index r = 0; r < nonmember_probs.rows(); ++r) {
        const int y = nonmember_labels[static_cast<std::size_t>(r)];
        const double s = oriented_score(kind, row_span(nonmember_probs, r), y);
        non[static_cast<std::size_t>(y)].push_back(s);
        non_all.push_back(s);
    }
    if (kind == AttackKind::correctness) {
        attack.global_threshold = 0.5;
        attack.thresholds.assign(static_cast<std::size_t>(num_classes), 0.5);
        return attack;
    }
    attack.global_threshold = best_threshold(mem_all, non_all);
    attack.thresholds.resize(static_cast<std::size_t>(num_classes));
    for (std::size_t c = 0; c < attack.thresholds.size(); ++c) {
        attack.thresholds[c] = (mem[c].empty() || non[c].empty())
                                   ? attack.global_threshold
                                   : best_threshold(mem[c], non[c]);
    }
    return attack;
}

MetricAttackResult metric_attack(AttackKind kind, const DefenderModel& model,
                                 const LabeledDataset& train_pool, std::span<const std::size_t> members,
                                 const LabeledDataset& eval_pool, std::span<const std::size_t> nonmembers,
                                 std::span<const std::size_t> forget, std::uint64_t seed) {
    if (members.size() < 2 || nonmembers.size() < 2) {
        throw EvaluationError("metric_attack needs at least two members and two non-members");
    }
    if (forget.empty()) {
        throw EvaluationError("metric_attack: empty forget set");
    }
    const auto [mem_cal, mem_eval] = seeded_halves(members, derive_seed(seed, 21));
    const auto [non_cal, non_eval] = seeded_halves(nonmembers, derive_seed(seed, 22));

    const auto mem_cal_y = train_pool.labels_at(mem_cal);
    const auto non_cal_y = eval_pool.labels_at(non_cal);
    const ThresholdAttack attack =
        calibrate_attack(kind, model.forward(train_pool.rows(mem_cal)), mem_cal_y,
                         model.forward(eval_pool.rows(non_cal)), non_cal_y, model.num_classes());

    auto member_rate = [&](const LabeledDataset& data, const IndexList& idx) {
        const Matrix p = model.forward(data.rows(idx));
        std::size_t hits = 0;
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            hits += attack.is_member(row_span(p, r), data.labels[idx[static_cast<std::size_t>(r)]]) ? 1 : 0;
        }
        return static_cast<double>(hits) / static_cast<double>(idx.size());
    };

    MetricAttackResult out;
    out.accuracy = 100.0 * 0.5 * (member_rate(train_pool, mem_eval) + 1.0 - member_rate(eval_pool, non_eval));
    const IndexList forget_list(forget.begin(), forget.end());
    out.efficacy = 100.0 * (1.0 - member_rate(train_pool, forget_list));
    return out;
}

// ---------------------------------------------------------------------------
// Reports

void MetricsReport::validate() const {
    check_pct("UA", ua);
    check_pct("MIA-efficacy", mia_efficacy);
    check_pct("RA", ra);
    check_pct("TA", ta);
    for (const auto& [name, r] : metric_attacks) {
        check_pct((name + " accuracy").c_str(), r.accuracy);
        check_pct((name + " efficacy").c_str(), r.efficacy);
    }
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["method"] = r.method;
    j["seed"] = r.seed;
    auto put = [&](const char* key, const std::optional<double>& v) {
        j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    put("UA", r.ua);
    put("MIA-Efficacy", r.mia_efficacy);
    put("RA", r.ra);
    put("TA", r.ta);
    put("Avg. Disparity", r.avg_disparity);
    nlohmann::json attacks = nlohmann::json::object();
    for (const auto& [name, a] : r.metric_attacks) {
        attacks[name] = {{"accuracy", a.accuracy}, {"efficacy", a.efficacy}};
    }
    j["metric_attacks"] = attacks;
    return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
    MetricsReport r;
    try {
        r.method = j.at("method").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        auto get = [&](const char* key) -> std::optional<double> {
            if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
            return j.at(key).get<double>();
        };
        r.ua = get("UA");
        r.mia_efficacy = get("MIA-Efficacy");
        r.ra = get("RA");
        r.ta = get("TA");
        r.avg_disparity = get("Avg. Disparity");
        if (j.contains("metric_attacks")) {
            for (const auto& [name, a] : j.at("metric_attacks").items()) {
                r.metric_attacks[name] = {a.at("accuracy").get<double>(), a.at("efficacy").get<double>()};
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("metrics report: ") + e.what());
    }
    return r;
}

double avg_disparity(const MetricsReport& report, const MetricsReport& gold) {
    const std::pair<const char*, std::pair<std::optional<double>, std::optional<double>>> terms[] = {
        {"UA", {report.ua, gold.ua}},
        {"MIA-Efficacy", {report.mia_efficacy, gold.mia_efficacy}},
        {"RA", {report.ra, gold.ra}},
        {"TA", {report.ta, gold.ta}},
    };
    double sum = 0.0;
    for (const auto& [name, pair] : terms) {
        if (!pair.first || !pair.second) {
            throw EvaluationError(std::string("avg_disparity: missing metric ") + name);
        }
        sum += std::abs(*pair.first - *pair.second);
    }
    return sum / 4.0;
}

MetricsReport evaluate_model(const DefenderModel& model, const LabeledDataset& train_pool,
                             const LabeledDataset& eval_pool, const SplitSet& splits, const EvalCfg& cfg) {
    MetricsReport r;
    r.seed = cfg.seed;
    r.ua = 100.0 - accuracy(model, train_pool, splits.forget);
    r.ra = accuracy(model, train_pool, splits.retain);
    const IndexList scored = scored_test_indices(splits, eval_pool);
    r.ta = accuracy(model, eval_pool, scored);

    IndexList members;
    if (cfg.svm_members == SvmMembers::train_pool) {
        members.resize(train_pool.size());
        std::iota(members.begin(), members.end(), std::size_t{0});
    } else {
        members = splits.retain;
    }
    r.mia_efficacy = mia_efficacy(model, train_pool, members, eval_pool, splits.test, splits.forget, cfg.mia);

    if (cfg.metric_attacks) {
        for (AttackKind kind : kAllAttacks) {
            r.metric_attacks[to_string(kind)] =
                metric_attack(kind, model, train_pool, splits.retain, eval_pool, splits.test, splits.forget,
                              derive_seed(cfg.seed, 30));
        }
    }
    return r;
}

}  // namespace advunlearn
