#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "advunlearn/baselines.hpp"
#include "advunlearn/errors.hpp"
#include "advunlearn/mia_eval.hpp"
#include "test_helpers.hpp"

using namespace advunlearn;

namespace {

MetricsReport four(double ua, double mia, double ra, double ta) {
    MetricsReport r;
    r.ua = ua;
    r.mia_efficacy = mia;
    r.ra = ra;
    r.ta = ta;
    return r;
}

}  // namespace

TEST_CASE("accuracy: counting") {
    Matrix p(4, 2);
    p << 0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7;
    const std::vector<int> y{0, 1, 0, 0};
    CHECK(accuracy_from_probs(p, y) == 75.0);
    CHECK(100.0 - accuracy_from_probs(p, y) == 25.0);
    CHECK_THROWS_AS(accuracy_from_probs(Matrix(0, 2), std::vector<int>{}), EvaluationError);
}

TEST_CASE("roc auc: separated, reversed, ties") {
    const std::vector<double> hi{0.9, 0.8}, lo{0.1, 0.2, 0.3};
    CHECK(roc_auc(hi, lo) == 1.0);
    CHECK(roc_auc(lo, hi) == 0.0);
    const std::vector<double> same{0.5, 0.5};
    CHECK(roc_auc(same, same) == 0.5);
    CHECK_THROWS_AS(roc_auc(hi, std::vector<double>{}), EvaluationError);
}

TEST_CASE("disparity: table examples") {
    CHECK(avg_disparity(four(3.46, 8.25, 99.50, 93.50), four(5.80, 13.91, 100.00, 94.30)) ==
          doctest::Approx(2.325).epsilon(1e-12));
    CHECK(avg_disparity(four(100, 100, 98.90, 93.22), four(100, 100, 100.00, 94.81)) ==
          doctest::Approx(0.6725).epsilon(1e-12));
    MetricsReport missing = four(1, 2, 3, 4);
    missing.ta.reset();
    CHECK_THROWS_AS(avg_disparity(missing, four(1, 2, 3, 4)), EvaluationError);
    CHECK(avg_disparity(four(1, 2, 3, 4), four(1, 2, 3, 4)) == 0.0);
}

TEST_CASE("entropies: examples") {
    const std::vector<double> half{0.5, 0.5};
    CHECK(prediction_entropy(half) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(modified_entropy(half, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    const std::vector<double> sure{1.0, 0.0};
    CHECK(prediction_entropy(sure) == doctest::Approx(0.0));
    CHECK(modified_entropy(sure, 0) == doctest::Approx(0.0));
    CHECK(modified_entropy(sure, 1) > 20.0);  // confidently wrong
    const std::vector<double> p{0.7, 0.2, 0.1};
    const double expect = -(0.3) * std::log(0.7) - 0.2 * std::log(0.8) - 0.1 * std::log(0.9);
    CHECK(modified_entropy(p, 0) == doctest::Approx(expect).epsilon(1e-14));
    CHECK_THROWS_AS(modified_entropy(p, 3), ShapeError);
    CHECK(attack_score(AttackKind::correctness, p, 0) == 1.0);
    CHECK(attack_score(AttackKind::correctness, p, 1) == 0.0);
    CHECK(attack_score(AttackKind::confidence, p, 2) == 0.7);
}

TEST_CASE("efficacy: counting and layout") {
    const std::vector<std::uint8_t> pred{1, 0, 0, 1};
    CHECK(efficacy_from_predictions(pred) == 50.0);
    CHECK_THROWS_AS(efficacy_from_predictions(std::vector<std::uint8_t>{}), EvaluationError);

    Matrix p(2, 3);
    p << 0.7, 0.2, 0.1, 0.1, 0.3, 0.6;
    const std::vector<int> y{1, 2};
    CHECK(mia_features(p, y, MiaFeature::confidence)(0, 0) == 0.7);
    CHECK(mia_features(p, y, MiaFeature::label_confidence)(0, 0) == 0.2);
    CHECK(mia_features(p, y, MiaFeature::label_confidence)(1, 0) == 0.6);
    CHECK(mia_features(p, y, MiaFeature::probabilities) == p);
    CHECK_THROWS_AS(mia_features(p, std::vector<int>{1}, MiaFeature::label_confidence), ShapeError);
    for (auto f : {MiaFeature::confidence, MiaFeature::label_confidence, MiaFeature::probabilities}) {
        CHECK(mia_feature_from_string(to_string(f)) == f);
    }
    CHECK_THROWS_AS(mia_feature_from_string("logits"), ConfigError);
}

TEST_CASE("svm: separable 1-d data") {
    Matrix x(40, 1);
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) {
        y[static_cast<std::size_t>(i)] = i < 20;
        x(i, 0) = (i < 20 ? 1.0 : -1.0) + 0.01 * i;
    }
    const auto svm = fit_svm(x, y, SvmCfg{});
    const auto pred = svm.predict(x);
    for (int i = 0; i < 40; ++i) CHECK(pred[static_cast<std::size_t>(i)] == y[static_cast<std::size_t>(i)]);
    CHECK_THROWS_AS(fit_svm(x, std::vector<int>(40, 1), SvmCfg{}), EvaluationError);
}

TEST_CASE("efficacy: independent of the order of the forget set") {
    const auto t = testing::make_toy();
    IndexList all(t.train.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto m = train_model(testing::small_arch(t.train), t.train, all, TrainCfg{0.1, 0.9, 5, 16, 0}, 1);
    MiaEfficacyCfg cfg;
    const double a =
        mia_efficacy(m, t.train, t.splits.retain, t.eval, t.splits.validation, t.splits.forget, cfg);
    IndexList rev = t.splits.forget;
    std::reverse(rev.begin(), rev.end());
    CHECK(mia_efficacy(m, t.train, t.splits.retain, t.eval, t.splits.validation, rev, cfg) == a);
    CHECK(a >= 0.0);
    CHECK(a <= 100.0);
    CHECK_THROWS_AS(mia_efficacy(m, t.train, t.splits.retain, t.eval, t.splits.validation, IndexList{}, cfg),
                    EvaluationError);

    const double same = svm_distinguish_accuracy(m, t.eval, t.splits.validation, t.eval, t.splits.test, cfg);
    CHECK(same >= 0.0);
    CHECK(same <= 1.0);
}

TEST_CASE("metric attacks: calibrated thresholds separate clear cases") {
    // members confident, non-members unsure
    Matrix mp(6, 2), np(6, 2);
    for (int i = 0; i < 6; ++i) {
        mp.row(i) << 0.95, 0.05;
        np.row(i) << 0.55, 0.45;
    }
    const std::vector<int> y(6, 0);
    for (auto kind : {AttackKind::confidence, AttackKind::entropy, AttackKind::modified_entropy}) {
        const auto atk = calibrate_attack(kind, mp, y, np, y, 2);
        CHECK(atk.thresholds.size() == 2);
        const std::vector<double> member{0.95, 0.05}, non{0.55, 0.45};
        CHECK(atk.is_member(member, 0));
        CHECK_FALSE(atk.is_member(non, 0));
        CHECK(to_string(kind).size() > 0);
    }
}

TEST_CASE("reports: json round trip and validation") {
    MetricsReport r = four(10, 20, 30, 40);
    r.method = "ours";
    r.seed = 3;
    r.avg_disparity = 1.5;
    r.metric_attacks["entropy"] = MetricAttackResult{55.0, 12.5};
    const auto back = report_from_json(to_json(r));
    CHECK(back.method == "ours");
    CHECK(back.seed == 3);
    CHECK(*back.ua == 10.0);
    CHECK(*back.avg_disparity == 1.5);
    CHECK(back.metric_attacks.at("entropy").efficacy == 12.5);
    r.validate();
    r.ra = 101.0;
    CHECK_THROWS_AS(r.validate(), EvaluationError);
}

TEST_CASE("evaluate_model: class-wise test accuracy skips the forgotten class") {
    const auto t = testing::make_toy(ForgetKind::class_wise);
    IndexList all(t.train.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto m = train_model(testing::small_arch(t.train), t.train, all, TrainCfg{0.1, 0.9, 5, 16, 0}, 1);
    EvalCfg cfg;
    const auto r = evaluate_model(m, t.train, t.eval, t.splits, cfg);
    CHECK(*r.ta == accuracy(m, t.eval, scored_test_indices(t.splits, t.eval)));
    CHECK(*r.ua == 100.0 - accuracy(m, t.train, t.splits.forget));
    CHECK(r.metric_attacks.size() == std::size(kAllAttacks));
    r.validate();
}
