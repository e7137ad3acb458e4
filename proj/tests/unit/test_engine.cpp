#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "advunlearn/baselines.hpp"
#include "advunlearn/engine.hpp"
#include "advunlearn/errors.hpp"
#include "advunlearn/nn/checkpoint.hpp"
#include "test_helpers.hpp"

using namespace advunlearn;

namespace {

UnlearnConfig tiny_cfg() {
    UnlearnConfig c;
    c.alpha = 0.5;
    c.beta = 0.01;
    c.eta_d = 0.01;
    c.eta_a = 1e-3;
    c.batch_size = 16;
    c.epochs = 2;
    c.pretrain_iters = 4;
    c.sensitivity.n = 3;
    c.attention = testing::small_attention();
    c.seed = 17;
    return c;
}

struct Fixture {
    testing::Toy toy = testing::make_toy();
    DefenderModel theta0;
    Fixture() : theta0(testing::small_arch(toy.train), 3) {
        TrainCfg tc{0.1, 0.9, 3, 16, 1};
        train_epochs(theta0, toy.train, all_indices(), tc);
    }
    IndexList all_indices() const {
        IndexList idx(toy.train.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        return idx;
    }
    UnlearnData data() const { return UnlearnData{&toy.train, &toy.eval, &toy.splits}; }
};

}  // namespace

TEST_CASE("alpha schedule: cutoff") {
    UnlearnConfig c;
    c.alpha = 0.9;
    c.alpha_cutoff_iters = 30;
    CHECK(alpha_schedule(0, c) == 0.9);
    CHECK(alpha_schedule(29, c) == 0.9);
    CHECK(alpha_schedule(30, c) == 0.0);
    CHECK(alpha_schedule(1000, c) == 0.0);
    c.alpha_cutoff_iters.reset();
    CHECK(alpha_schedule(1000, c) == 0.9);
}

TEST_CASE("config: scheme defaults and validation") {
    const auto cw = UnlearnConfig::defaults_for(ForgetKind::class_wise, false);
    CHECK(cw.eta_d == 0.02);
    REQUIRE(cw.alpha_cutoff_iters.has_value());
    CHECK(*cw.alpha_cutoff_iters == 30);
    CHECK(UnlearnConfig::defaults_for(ForgetKind::random_fraction, false).eta_d == 0.01);
    CHECK(UnlearnConfig::defaults_for(ForgetKind::random_fraction, true).eta_d == 0.03);
    CHECK_FALSE(UnlearnConfig::defaults_for(ForgetKind::random_fraction, false).alpha_cutoff_iters.has_value());

    UnlearnConfig bad;
    bad.alpha = -1.0;
    try {
        bad.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("alpha") != std::string::npos);
    }
}

TEST_CASE("adversarial term: examples") {
    const double a = 0.9;
    const Vector half = Vector::Zero(4);
    const auto s = defender_adversarial_term(half, half, a, false);
    const auto n = defender_adversarial_term(half, half, a, true);
    CHECK(s.value == doctest::Approx(-2.0 * a * std::log(2.0)).epsilon(1e-14));
    CHECK(n.value == doctest::Approx(s.value).epsilon(1e-14));

    // a_f = 0.9, a_v = 0.1
    const Vector lf = Vector::Constant(1, std::log(9.0));
    const Vector lv = Vector::Constant(1, -std::log(9.0));
    CHECK(defender_adversarial_term(lf, lv, 1.0, false).value == doctest::Approx(2 * std::log(0.9)).epsilon(1e-12));
    CHECK(defender_adversarial_term(lf, lv, 1.0, false).value == doctest::Approx(-0.2107).epsilon(1e-3));
    CHECK(defender_adversarial_term(lf, lv, 1.0, true).value == doctest::Approx(2 * std::log(0.1)).epsilon(1e-12));
    CHECK(defender_adversarial_term(lf, lv, 1.0, true).value == doctest::Approx(-4.6052).epsilon(1e-4));
}

TEST_CASE("adversarial term: loss sign and logit gradients") {
    const Vector lf = testing::random_matrix(5, 1, 1).col(0);
    const Vector lv = testing::random_matrix(5, 1, 2).col(0);
    for (bool ns : {false, true}) {
        const auto t = defender_adversarial_term(lf, lv, 0.7, ns);
        CHECK(t.loss == (ns ? -t.value : t.value));
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < 5; ++i) {
            Vector up = lf, dn = lf;
            up[i] += h;
            dn[i] -= h;
            const double fd = (defender_adversarial_term(up, lv, 0.7, ns).loss -
                               defender_adversarial_term(dn, lv, 0.7, ns).loss) / (2 * h);
            CHECK(t.d_logit_f[i] == doctest::Approx(fd).epsilon(1e-7));
            Vector vu = lv, vd = lv;
            vu[i] += h;
            vd[i] -= h;
            const double fv = (defender_adversarial_term(lf, vu, 0.7, ns).loss -
                               defender_adversarial_term(lf, vd, 0.7, ns).loss) / (2 * h);
            CHECK(t.d_logit_v[i] == doctest::Approx(fv).epsilon(1e-7));
        }
    }
}

TEST_CASE("engine: alpha = beta = 0 reproduces fine-tuning bit for bit") {
    const Fixture fx;
    auto cfg = tiny_cfg();
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    cfg.epochs = 3;
    cfg.record_metrics = false;
    const auto ours = run_unlearning(fx.theta0, fx.data(), cfg);
    TrainCfg ft{cfg.eta_d, cfg.momentum, cfg.epochs, cfg.batch_size, cfg.seed};
    const auto ref = finetune(fx.theta0, fx.toy.train, fx.toy.splits.retain, ft);
    CHECK(ours.model.params().values() == ref.params().values());
    CHECK(ours.model.params().values() != fx.theta0.params().values());
}

TEST_CASE("engine: attacker with zero head leaves only the CE update") {
    const Fixture fx;
    auto cfg = tiny_cfg();
    cfg.beta = 0.0;
    cfg.record_metrics = false;
    auto state = make_engine_state(fx.theta0, cfg);
    for (const char* name : {"binary_head.weight", "binary_head.bias"}) {
        state.attacker.params().matrix(*state.attacker.params().find(name)).setZero();
    }
    // effectively frozen attacker: the head stays at ~0
    state.attacker_opt = Adam(1e-300);
    unlearn_epoch(state, fx.data(), cfg, 0);

    DefenderModel ref = fx.theta0;
    Sgd opt(cfg.eta_d, cfg.momentum);
    ce_epoch(ref, opt, fx.toy.train, fx.toy.splits.retain, cfg.batch_size, derive_seed(cfg.seed, 0));
    CHECK((state.defender.params().values() - ref.params().values()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("engine: attacker update precedes defender update each iteration") {
    const Fixture fx;
    auto cfg = tiny_cfg();
    cfg.epochs = 1;
    cfg.alpha_cutoff_iters = 2;
    std::vector<std::string> events;
    std::vector<std::size_t> iters;
    run_unlearning(fx.theta0, fx.data(), cfg, [&](std::string_view ev, const StepTrace& t) {
        events.emplace_back(ev);
        iters.push_back(t.iter);
    });
    const std::size_t batches = (fx.toy.splits.retain.size() + cfg.batch_size - 1) / cfg.batch_size;
    REQUIRE(events.size() == batches + 2);
    CHECK(events[0] == "attacker_step");
    CHECK(events[1] == "defender_step");
    CHECK(events[2] == "attacker_step");
    CHECK(events[3] == "defender_step");
    CHECK(iters[2] == 1);
    for (std::size_t i = 4; i < events.size(); ++i) CHECK(events[i] == "defender_step");
}

TEST_CASE("engine: logged defender loss is the sum of its terms") {
    const Fixture fx;
    auto cfg = tiny_cfg();
    cfg.epochs = 1;
    std::vector<StepTrace> traces;
    const auto res = run_unlearning(fx.theta0, fx.data(), cfg, [&](std::string_view ev, const StepTrace& t) {
        if (ev == "defender_step") traces.push_back(t);
    });
    REQUIRE_FALSE(traces.empty());
    double mean = 0.0;
    for (const auto& t : traces) {
        CHECK(std::abs(t.defender_loss - (t.ce + t.adversarial + cfg.beta * t.ss)) <= 1e-12);
        CHECK(t.adversarial != 0.0);
        CHECK(t.ss > 0.0);
        mean += t.defender_loss;
    }
    mean /= static_cast<double>(traces.size());
    CHECK(res.history.epochs[0].defender_loss == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("engine: epochs = 0 returns theta_0 exactly") {
    const Fixture fx;
    auto cfg = tiny_cfg();
    cfg.epochs = 0;
    const auto res = run_unlearning(fx.theta0, fx.data(), cfg);
    CHECK(res.model.params().values() == fx.theta0.params().values());
    CHECK(res.history.epochs.empty());
}

TEST_CASE("engine: seeded runs are reproducible, history is well formed") {
    const Fixture fx;
    const auto cfg = tiny_cfg();
    const auto a = run_unlearning(fx.theta0, fx.data(), cfg);
    const auto b = run_unlearning(fx.theta0, fx.data(), cfg);
    CHECK(a.model.params().values() == b.model.params().values());
    CHECK(a.history.to_csv() == b.history.to_csv());
    REQUIRE(a.history.epochs.size() == 2);
    const auto& r = a.history.epochs[1];
    CHECK(r.epoch == 1);
    CHECK(r.attacker_objective.has_value());
    CHECK(r.attacker_auc.has_value());
    CHECK(*r.ua >= 0.0);
    CHECK(*r.ra <= 100.0);
    const auto csv = a.history.to_csv();
    CHECK(csv.rfind("epoch,iterations,alpha,ce,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

    auto other = cfg;
    other.seed += 1;
    CHECK(run_unlearning(fx.theta0, fx.data(), other).model.params().values() != a.model.params().values());
}

TEST_CASE("engine: per-epoch checkpoints replay the run") {
    const Fixture fx;
    testing::TempDir dir("engine_ckpt");
    auto cfg = tiny_cfg();
    cfg.checkpoint_dir = dir.path;
    const auto res = run_unlearning(fx.theta0, fx.data(), cfg);
    DefenderModel replay = fx.theta0;
    load_checkpoint_into(replay.params(), dir.path / "epoch_001.ckpt");
    CHECK(replay.params().values() == res.model.params().values());

    // resuming epoch 1 from the epoch-0 checkpoint with a fresh optimizer differs
    // only through momentum; the recorded parameters are still the run's
    DefenderModel mid = fx.theta0;
    load_checkpoint_into(mid.params(), dir.path / "epoch_000.ckpt");
    CHECK(mid.params().values() != res.model.params().values());
    CHECK(mid.params().values() != fx.theta0.params().values());
}

TEST_CASE("engine: data errors") {
    const Fixture fx;
    auto cfg = tiny_cfg();
    auto state = make_engine_state(fx.theta0, cfg);
    CHECK_THROWS_AS(unlearn_epoch(state, UnlearnData{}, cfg, 0), ConfigError);
    SplitSet empty = fx.toy.splits;
    empty.forget.clear();
    CHECK_THROWS_AS(unlearn_epoch(state, UnlearnData{&fx.toy.train, &fx.toy.eval, &empty}, cfg, 0), EvaluationError);
}
