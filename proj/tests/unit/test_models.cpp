#include <doctest.h>

#include <cmath>
#include <vector>

#include "advunlearn/attacker.hpp"
#include "advunlearn/defender.hpp"
#include "advunlearn/errors.hpp"
#include "advunlearn/nn/grad_check.hpp"
#include "advunlearn/nn/optim.hpp"
#include "advunlearn/ssreg.hpp"
#include "test_helpers.hpp"

using namespace advunlearn;
using testing::random_matrix;

namespace {

void zero_param(ParamStore& ps, const std::string& name) {
    const auto id = ps.find(name);
    REQUIRE(id.has_value());
    ps.matrix(*id).setZero();
}

std::vector<int> cyclic_labels(std::size_t n, int k) {
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % static_cast<std::size_t>(k));
    return y;
}

AttackerModel small_attacker(int k, std::uint64_t seed = 3) {
    AttackerArch a;
    a.num_classes = k;
    a.attention = testing::small_attention();
    return AttackerModel(a, seed);
}

Matrix random_mia_batch(Eigen::Index rows, int k, std::uint64_t seed) {
    const Matrix p = testing::random_probs(rows, k, seed);
    const Matrix d = random_matrix(rows, k, seed + 1, 0.1).cwiseAbs();
    return build_mia_batch(p, d, cyclic_labels(static_cast<std::size_t>(rows), k));
}

}  // namespace

// ---- defender ----

TEST_CASE("defender: zero head gives uniform output") {
    DefenderArch a{5, {7}, 4, 4};
    DefenderModel m(a, 1);
    zero_param(m.params(), "head.weight");
    const Matrix p = m.forward(random_matrix(6, 5, 2));
    CHECK((p.array() - 0.25).abs().maxCoeff() < 1e-15);
}

TEST_CASE("defender: rows are probability vectors, composition law holds") {
    DefenderArch a{5, {9, 7}, 6, 3};
    DefenderModel m(a, 4);
    const Matrix x = random_matrix(8, 5, 5);
    const auto pass = m.forward_pass(x);
    CHECK(pass.features.rows() == 8);
    CHECK(pass.features.cols() == 6);
    CHECK((pass.probs.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(softmax_rows(m.head(m.features(x))) == pass.probs);
}

TEST_CASE("defender: hand-set one-layer net") {
    DefenderArch a{2, {}, 2, 2};
    DefenderModel m(a, 1);
    auto& ps = m.params();
    ps.matrix(*ps.find("encoder0.weight")) = Matrix::Identity(2, 2);
    ps.matrix(*ps.find("encoder0.bias")).setZero();
    Matrix w(2, 2);
    w << 1.0, -1.0, 0.5, 2.0;
    ps.matrix(*ps.find("head.weight")) = w;
    Matrix b(1, 2);
    b << 0.1, -0.2;
    ps.matrix(*ps.find("head.bias")) = b;
    Matrix x(1, 2);
    x << 1.0, 2.0;
    // features = relu(x) = [1, 2]; logits = [1 + 1 + 0.1, -1 + 4 - 0.2] = [2.1, 2.8]
    const double e0 = std::exp(2.1), e1 = std::exp(2.8);
    const Matrix p = m.forward(x);
    CHECK(p(0, 0) == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-14));
    CHECK(p(0, 1) == doctest::Approx(e1 / (e0 + e1)).epsilon(1e-14));
    CHECK(m.features(x) == x);
}

TEST_CASE("defender: input errors") {
    DefenderModel m(DefenderArch{3, {4}, 2, 2}, 1);
    CHECK_THROWS_AS(m.forward(Matrix::Zero(2, 4)), ShapeError);
    Matrix bad = Matrix::Zero(1, 3);
    bad(0, 1) = std::nan("");
    CHECK_THROWS_AS(m.forward(bad), NumericError);
    CHECK_THROWS_AS(DefenderModel(DefenderArch{3, {4}, 2, 1}, 1), ConfigError);
}

TEST_CASE("ce: uniform gives ln K, perfect gives ~0") {
    Matrix u = Matrix::Constant(4, 10, 0.1);
    const std::vector<int> y{0, 3, 9, 2};
    CHECK(ce_loss_from_probs(u, y) == doctest::Approx(std::log(10.0)).epsilon(1e-14));
    Matrix hot = Matrix::Zero(4, 10);
    for (int i = 0; i < 4; ++i) hot(i, y[static_cast<std::size_t>(i)]) = 1.0;
    CHECK(ce_loss_from_probs(hot, y) <= 1e-10);
    hot(0, 0) = 0.0;  // clamp keeps this finite
    CHECK(std::isfinite(ce_loss_from_probs(hot, y)));
}

TEST_CASE("ce: logit gradient is (p - y) / B") {
    const Matrix p = testing::random_probs(3, 4, 8);
    const std::vector<int> y{1, 0, 3};
    const Matrix g = ce_logit_grad(p, y);
    for (Eigen::Index i = 0; i < 3; ++i) {
        for (Eigen::Index k = 0; k < 4; ++k) {
            const double onehot = k == y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
            CHECK(g(i, k) == doctest::Approx((p(i, k) - onehot) / 3.0).epsilon(1e-15));
        }
    }
}

TEST_CASE("ce: finite-difference check through the network") {
    DefenderModel m(DefenderArch{5, {7, 6}, 4, 3}, 21);
    const Matrix x = random_matrix(9, 5, 22);
    const auto y = cyclic_labels(9, 3);
    const double err = grad_check([&](ParamStore&) { return ce_loss(m, x, y); }, m.params());
    CHECK(err <= 1e-6);
}

TEST_CASE("defender: extra feature gradient is added before the encoder") {
    DefenderModel m(DefenderArch{4, {5}, 3, 3}, 31);
    const Matrix x = random_matrix(6, 4, 32);
    const Matrix wf = random_matrix(6, 3, 33);
    const Matrix wl = random_matrix(6, 3, 34);
    auto loss = [&](ParamStore& ps) {
        const auto pass = m.forward_pass(x);
        m.backward(pass, wl, &wf);
        (void)ps;
        return (pass.logits.cwiseProduct(wl)).sum() + (pass.features.cwiseProduct(wf)).sum();
    };
    CHECK(grad_check(loss, m.params()) <= 1e-6);
}

// ---- attacker ----

TEST_CASE("mia input: layout, length and round trip") {
    const std::vector<double> p{0.7, 0.2, 0.1};
    const std::vector<double> d{0.01, 0.02, 0.03};
    const Vector m = build_mia_input(p, d, 1, 3);
    const std::vector<double> expect{0.7, 0.2, 0.1, 0.01, 0.02, 0.03, 0, 1, 0};
    REQUIRE(m.size() == 9);
    for (std::size_t i = 0; i < 9; ++i) CHECK(m[static_cast<Eigen::Index>(i)] == expect[i]);

    const auto parts = split_mia_input(std::span<const double>(m.data(), 9), 3);
    CHECK(parts.label == 1);
    CHECK(parts.probs[0] == 0.7);
    CHECK(parts.delta[2] == 0.03);

    const Matrix batch = random_mia_batch(5, 10, 2);
    CHECK(batch.cols() == 30);
    for (Eigen::Index r = 0; r < 5; ++r) CHECK(batch.row(r).tail(10).sum() == 1.0);

    CHECK_THROWS_AS(build_mia_input(p, std::vector<double>{0.1}, 0, 3), ShapeError);
    const std::vector<double> not_hot{0.7, 0.2, 0.1, 0, 0, 0, 1, 1, 0};
    CHECK_THROWS_AS(split_mia_input(not_hot, 3), ShapeError);
}

TEST_CASE("attacker: zero binary head gives 0.5") {
    auto att = small_attacker(4);
    zero_param(att.params(), "binary_head.weight");
    zero_param(att.params(), "binary_head.bias");
    const Vector out = att.forward(random_mia_batch(7, 4, 9));
    CHECK((out.array() - 0.5).abs().maxCoeff() == 0.0);
}

TEST_CASE("attacker: outputs strictly inside (0,1)") {
    auto att = small_attacker(5, 12);
    const Vector out = att.forward(random_mia_batch(40, 5, 13));
    CHECK(out.minCoeff() > 0.0);
    CHECK(out.maxCoeff() < 1.0);
    CHECK(attacker_scores(att, random_mia_batch(40, 5, 13)) == out);
}

TEST_CASE("attacker: finite-difference check through the full stack") {
    AttackerArch a;
    a.num_classes = 3;
    a.attention.num_layers = 2;
    a.attention.num_heads = 2;
    a.attention.model_dim = 8;
    AttackerModel att(a, 41);
    const Matrix in = random_mia_batch(5, 3, 42);
    const Vector w = random_matrix(5, 1, 43).col(0);
    auto loss = [&](ParamStore&) {
        const auto pass = att.forward_pass(in);
        att.backward(pass, w);
        return pass.logits.dot(w);
    };
    CHECK(grad_check(loss, att.params()) <= 1e-5);
}

TEST_CASE("attacker: input gradient matches finite differences") {
    auto att = small_attacker(3, 51);
    Matrix in = random_mia_batch(2, 3, 52);
    att.params().zero_grad();
    const auto pass = att.forward_pass(in);
    const Matrix d_in = att.backward(pass, Vector::Ones(2));
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < in.cols(); ++j) {
        Matrix up = in, dn = in;
        up(1, j) += h;
        dn(1, j) -= h;
        const double fd = (att.forward_pass(up).logits.sum() - att.forward_pass(dn).logits.sum()) / (2 * h);
        CHECK(d_in(1, j) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("attacker loss: examples") {
    const Vector zero = Vector::Zero(3);
    const auto obj = attacker_loss(zero, zero);
    CHECK(obj.value == doctest::Approx(-1.3862943611198906).epsilon(1e-14));
    CHECK(obj.pairs == 3);

    const std::vector<double> af{0.8}, av{0.3};
    CHECK(attacker_loss_from_probs(af, av) == doctest::Approx(std::log(0.8) + std::log(0.7)).epsilon(1e-14));
    CHECK(attacker_loss_from_probs(af, av) == doctest::Approx(-0.5798).epsilon(1e-4));

    // perfect attacker approaches the supremum 0
    const Vector big = Vector::Constant(2, 40.0);
    CHECK(attacker_loss(big, -big).value > -1e-15);
    CHECK(attacker_loss(big, -big).value <= 0.0);

    CHECK_THROWS_AS(attacker_loss(Vector(), zero), ShapeError);
}

TEST_CASE("attacker loss: logit gradients and truncation") {
    const Vector lf = random_matrix(4, 1, 61).col(0);
    const Vector lv = random_matrix(3, 1, 62).col(0);
    const auto obj = attacker_loss(lf, lv);
    CHECK(obj.pairs == 3);
    CHECK(obj.d_logit_f[3] == 0.0);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < 3; ++i) {
        Vector up = lf, dn = lf;
        up[i] += h;
        dn[i] -= h;
        CHECK(obj.d_logit_f[i] ==
              doctest::Approx((attacker_loss(up, lv).value - attacker_loss(dn, lv).value) / (2 * h)).epsilon(1e-7));
        Vector vu = lv, vd = lv;
        vu[i] += h;
        vd[i] -= h;
        CHECK(obj.d_logit_v[i] ==
              doctest::Approx((attacker_loss(lf, vu).value - attacker_loss(lf, vd).value) / (2 * h)).epsilon(1e-7));
    }
}

TEST_CASE("attacker loss: maximized at a_f = 1, a_v = 0") {
    const std::vector<double> best_f{1.0}, best_v{0.0};
    const double best = attacker_loss_from_probs(best_f, best_v);
    CHECK(best == 0.0);
    for (double f = 0.05; f < 1.0; f += 0.1) {
        for (double v = 0.05; v < 1.0; v += 0.1) {
            CHECK(attacker_loss_from_probs(std::vector<double>{f}, std::vector<double>{v}) < best);
        }
    }
}

// ---- sensitivity ----

TEST_CASE("sensitivity: zero noise or constant output gives zero") {
    DefenderModel m(DefenderArch{4, {6}, 5, 3}, 71);
    const Matrix x = random_matrix(5, 4, 72);
    SensitivityCfg cfg;
    cfg.sigma = 0.0;
    CHECK(sensitivity(m, x, cfg).isZero(0.0));
    cfg.sigma = 1.0;
    CHECK(sensitivity(m, x, cfg).minCoeff() >= 0.0);
    CHECK(sensitivity(m, x, cfg).maxCoeff() > 0.0);
    zero_param(m.params(), "head.weight");
    CHECK(sensitivity(m, x, cfg).isZero(0.0));
}

TEST_CASE("sensitivity: single draw matches hand evaluation") {
    DefenderModel m(DefenderArch{3, {}, 4, 3}, 81);
    const Matrix x = random_matrix(2, 3, 82);
    SensitivityCfg cfg;
    cfg.n = 1;
    cfg.sigma = 0.7;
    cfg.seed = 83;
    const Matrix eps = draw_noise(2, 3, cfg);
    const Matrix expect = (m.forward(x) - m.forward(x + eps)).cwiseAbs();
    CHECK((sensitivity(m, x, cfg) - expect).cwiseAbs().maxCoeff() < 1e-15);

    cfg.sigma = 1e-7;
    CHECK(sensitivity(m, x, cfg).maxCoeff() < 1e-5);
}

TEST_CASE("sensitivity: invariant to the order of noise draws") {
    DefenderModel m(DefenderArch{3, {5}, 4, 3}, 91);
    const Matrix x = random_matrix(2, 3, 92);
    SensitivityCfg cfg;
    cfg.n = 4;
    cfg.seed = 93;
    const Matrix noise = draw_noise(2, 3, cfg);
    Matrix reversed(noise.rows(), noise.cols());
    for (Eigen::Index b = 0; b < 2; ++b) {
        for (Eigen::Index i = 0; i < 4; ++i) reversed.row(b * 4 + i) = noise.row(b * 4 + (3 - i));
    }
    const auto a = probe_defender(m, x, cfg, &noise);
    const auto r = probe_defender(m, x, cfg, &reversed);
    CHECK((a.delta - r.delta).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(a.delta == sensitivity(m, x, cfg));
}

TEST_CASE("backward_probe: finite-difference check") {
    for (auto norm : {SensitivityNorm::elementwise, SensitivityNorm::l2}) {
        // wide enough that no sample has a fully dead layer (a ReLU kink at 0)
        DefenderModel m(DefenderArch{4, {16}, 5, 3}, 101);
        const Matrix x = random_matrix(3, 4, 102);
        SensitivityCfg cfg;
        cfg.n = 3;
        cfg.sigma = 0.5;
        cfg.seed = 103;
        cfg.norm = norm;
        const Matrix noise = draw_noise(3, 4, cfg);
        const Matrix wp = random_matrix(3, 3, 104);
        const Matrix wd = random_matrix(3, 3, 105);
        const Matrix wf = random_matrix(3, 5, 106);
        auto loss = [&](ParamStore&) {
            const auto probe = probe_defender(m, x, cfg, &noise);
            backward_probe(m, probe, wp, wd, &wf);
            return probe.clean.probs.cwiseProduct(wp).sum() + probe.delta.cwiseProduct(wd).sum() +
                   probe.clean.features.cwiseProduct(wf).sum();
        };
        CHECK(grad_check(loss, m.params()) <= 1e-5);
    }
}

// ---- pretraining ----

TEST_CASE("pretrain: defender untouched, iters = 0 is a no-op") {
    const auto t = testing::make_toy();
    DefenderModel def(testing::small_arch(t.train), 111);
    const auto def_sum = def.params().checksum();
    auto att = small_attacker(t.train.num_classes, 112);
    const auto att_sum = att.params().checksum();
    Adam opt(1e-3);
    PretrainCfg cfg;
    cfg.iters = 0;
    pretrain_attacker(att, opt, def, t.train, t.splits.forget, t.eval, t.splits.validation, cfg);
    CHECK(att.params().checksum() == att_sum);

    cfg.iters = 5;
    cfg.batch_size = 8;
    pretrain_attacker(att, opt, def, t.train, t.splits.forget, t.eval, t.splits.validation, cfg);
    CHECK(att.params().checksum() != att_sum);
    CHECK(def.params().checksum() == def_sum);
}

TEST_CASE("pretrain: ascent raises the objective on a fixed batch") {
    const auto t = testing::make_toy();
    DefenderModel def(testing::small_arch(t.train), 121);
    // make members look different: shift their inputs
    auto members = t.train;
    members.features.array() += 3.0;
    auto att = small_attacker(t.train.num_classes, 122);
    SensitivityCfg sens;
    sens.seed = 1;
    const Matrix mf = mia_inputs_for(def, members, t.splits.retain, sens);
    const Matrix mv = mia_inputs_for(def, t.eval, t.splits.validation, sens);
    auto objective = [&] {
        const Vector af = att.forward(mf), av = att.forward(mv);
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(af.size()), static_cast<std::size_t>(av.size()));
        return attacker_loss_from_probs(std::span<const double>(af.data(), n), std::span<const double>(av.data(), n));
    };
    const double before = objective();
    Adam opt(3e-3);
    PretrainCfg cfg;
    cfg.iters = 60;
    cfg.batch_size = 16;
    pretrain_attacker(att, opt, def, members, t.splits.retain, t.eval, t.splits.validation, cfg);
    CHECK(objective() > before);
}

// ---- ssreg ----

TEST_CASE("cross-correlation: self, hand case, negation") {
    const Matrix z = random_matrix(10, 4, 131);
    const auto c = cross_correlation(z, z);
    CHECK((c.c.diagonal().array() - 1.0).abs().maxCoeff() <= 1e-9);
    CHECK(c.batch == 10);
    CHECK(c.c.cwiseAbs().maxCoeff() <= 1.0 + 1e-9);

    Matrix f(2, 1), v(2, 1);
    f << 1, -1;
    v << 2, -2;
    CHECK(cross_correlation(f, v).c(0, 0) == doctest::Approx(4.0 / (std::sqrt(2.0) * std::sqrt(8.0))).epsilon(1e-12));
    CHECK(cross_correlation(f, -v).c(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));

    CHECK_THROWS_AS(cross_correlation(Matrix::Ones(1, 2), Matrix::Ones(1, 2)), ShapeError);
    CHECK_THROWS_AS(cross_correlation(Matrix::Ones(3, 2), Matrix::Ones(4, 2)), ShapeError);
}

TEST_CASE("cross-correlation: zero-variance column is guarded") {
    Matrix f = random_matrix(5, 2, 141);
    f.col(1).setConstant(2.0);
    const auto c = cross_correlation(f, random_matrix(5, 2, 142));
    CHECK(c.c.allFinite());
    CHECK(std::abs(c.c(1, 0)) < 1e-9);
}

TEST_CASE("ss loss: examples") {
    CrossCorr id{Matrix::Identity(3, 3), 4};
    CHECK(ss_loss(id) == 0.0);
    CrossCorr c{Matrix(2, 2), 4};
    c.c << 0.5, 0.2, 0.1, 1.0;
    CHECK(ss_loss(c, 5e-3) == doctest::Approx(0.25025).epsilon(1e-14));
    CHECK_THROWS_AS(ss_loss(c, -1.0), ConfigError);
    CHECK(ss_loss(cross_correlation(random_matrix(6, 3, 1), random_matrix(6, 3, 2))) > 0.0);
}

TEST_CASE("ss loss: scale and shift invariance") {
    const Matrix f = random_matrix(8, 3, 151);
    const Matrix v = random_matrix(8, 3, 152);
    const double base = ss_loss(cross_correlation(f, v));
    Matrix fs = f, vs = v;
    fs.col(1) *= 7.5;
    vs.col(1) *= 7.5;
    CHECK(ss_loss(cross_correlation(fs, vs)) == doctest::Approx(base).epsilon(1e-9));
    Matrix fsh = f;
    fsh.col(2).array() += 100.0;
    Matrix vsh = v;
    vsh.col(0).array() -= 3.0;
    CHECK((cross_correlation(fsh, vsh).c - cross_correlation(f, v).c).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("ss loss: gradient through centering and normalization") {
    Matrix f = random_matrix(6, 4, 161);
    Matrix v = random_matrix(6, 4, 162);
    const auto r = ss_loss_with_grad(f, v, 0.3);
    CHECK(r.value == doctest::Approx(ss_loss(r.corr, 0.3)).epsilon(1e-14));
    const double h = 1e-6;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        Matrix up = f, dn = f;
        up.data()[i] += h;
        dn.data()[i] -= h;
        const double fd = (ss_loss(cross_correlation(up, v), 0.3) - ss_loss(cross_correlation(dn, v), 0.3)) / (2 * h);
        worst = std::max(worst, std::abs(fd - r.d_z_f.data()[i]) / std::max(1.0, std::abs(fd)));
        Matrix vu = v, vd = v;
        vu.data()[i] += h;
        vd.data()[i] -= h;
        const double fv = (ss_loss(cross_correlation(f, vu), 0.3) - ss_loss(cross_correlation(f, vd), 0.3)) / (2 * h);
        worst = std::max(worst, std::abs(fv - r.d_z_v.data()[i]) / std::max(1.0, std::abs(fv)));
    }
    CHECK(worst <= 1e-5);
}
