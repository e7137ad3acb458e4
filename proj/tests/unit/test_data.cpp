#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "advunlearn/data/dataset.hpp"
#include "advunlearn/data/sampler.hpp"
#include "advunlearn/data/splits.hpp"
#include "advunlearn/errors.hpp"
#include "test_helpers.hpp"

using namespace advunlearn;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

void check_partition(const LabeledDataset& train, const SplitSet& s) {
    IndexList all = s.retain;
    all.insert(all.end(), s.forget.begin(), s.forget.end());
    std::sort(all.begin(), all.end());
    REQUIRE(all.size() == train.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        CHECK(all[i] == i);
    }
    CHECK(std::is_sorted(s.retain.begin(), s.retain.end()));
    CHECK(std::is_sorted(s.forget.begin(), s.forget.end()));
}

// Plain softmax regression by full-batch gradient descent.
double linear_train_accuracy(const LabeledDataset& ds) {
    const auto n = static_cast<Eigen::Index>(ds.size());
    const auto d = ds.features.cols();
    const int k = ds.num_classes;
    Matrix w = Matrix::Zero(d + 1, k);
    Matrix x(n, d + 1);
    x << ds.features, Matrix::Ones(n, 1);
    for (int it = 0; it < 300; ++it) {
        Matrix p = softmax_rows(x * w);
        for (Eigen::Index i = 0; i < n; ++i) p(i, ds.labels[static_cast<std::size_t>(i)]) -= 1.0;
        w -= 0.5 * x.transpose() * p / static_cast<double>(n);
    }
    const Matrix logits = x * w;
    int correct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index arg;
        logits.row(i).maxCoeff(&arg);
        correct += arg == ds.labels[static_cast<std::size_t>(i)];
    }
    return 100.0 * correct / static_cast<double>(n);
}

}  // namespace

TEST_CASE("splits: 10% of 100 samples") {
    const auto train = gen_synthetic(4, 25, 3, 1.0, 1);
    const auto eval = gen_synthetic_pool(4, 10, 3, 1.0, 1, 2);
    ForgetScheme s;
    s.fraction = 0.10;
    s.seed = 9;
    const auto sp = make_splits(train, eval, s);
    CHECK(sp.forget.size() == 10);
    CHECK(sp.retain.size() == 90);
    check_partition(train, sp);
    CHECK(sp.validation.size() + sp.test.size() == eval.size());
    CHECK(sp.validation.size() == 20);
}

TEST_CASE("splits: seeded and pure") {
    const auto t = testing::make_toy();
    ForgetScheme s = t.splits.scheme;
    const auto again = make_splits(t.train, t.eval, s);
    CHECK(again.forget == t.splits.forget);
    CHECK(again.retain == t.splits.retain);
    CHECK(again.validation == t.splits.validation);
    CHECK(again.test == t.splits.test);
    s.seed += 1;
    CHECK(make_splits(t.train, t.eval, s).forget != t.splits.forget);
}

TEST_CASE("splits: class-wise forget set is exactly one class") {
    const auto t = testing::make_toy(ForgetKind::class_wise);
    check_partition(t.train, t.splits);
    for (auto i : t.splits.forget) CHECK(t.train.labels[i] == 1);
    for (auto i : t.splits.retain) CHECK(t.train.labels[i] != 1);
    for (auto i : scored_test_indices(t.splits, t.eval)) CHECK(t.eval.labels[i] != 1);

    const auto r = testing::make_toy(ForgetKind::random_fraction);
    CHECK(scored_test_indices(r.splits, r.eval) == r.splits.test);
}

TEST_CASE("splits: partition law holds for many seeds and fractions") {
    const auto train = gen_synthetic(3, 17, 2, 1.0, 4);
    const auto eval = gen_synthetic_pool(3, 5, 2, 1.0, 4, 5);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (double f : {0.05, 0.3, 0.77}) {
            ForgetScheme s;
            s.fraction = f;
            s.seed = seed;
            check_partition(train, make_splits(train, eval, s));
        }
    }
}

TEST_CASE("splits: errors") {
    auto train = gen_synthetic(3, 4, 2, 1.0, 1);
    const auto eval = gen_synthetic_pool(3, 4, 2, 1.0, 1, 2);
    ForgetScheme s;
    s.kind = ForgetKind::class_wise;
    s.class_id = 3;
    CHECK_THROWS_AS(make_splits(train, eval, s), ConfigError);

    // class 1 declared but absent
    for (auto& y : train.labels) {
        if (y == 1) y = 0;
    }
    s.class_id = 1;
    CHECK_THROWS_AS(make_splits(train, eval, s), EvaluationError);

    ForgetScheme r;
    r.fraction = 1.5;
    CHECK_THROWS_AS(make_splits(train, eval, r), ConfigError);
    r.fraction = 0.001;
    CHECK_THROWS_AS(make_splits(train, eval, r), EvaluationError);
    CHECK(forget_kind_from_string("class_wise") == ForgetKind::class_wise);
    CHECK_THROWS_AS(forget_kind_from_string("half"), ConfigError);
}

TEST_CASE("synthetic: zero spread puts points on their centers") {
    const auto ds = gen_synthetic(2, 1, 4, 0.0, 3);
    REQUIRE(ds.size() == 2);
    CHECK(ds.labels == std::vector<int>{0, 1});
    CHECK(ds.features.row(0).norm() == doctest::Approx(3.0));
    CHECK(ds.features.row(1).norm() == doctest::Approx(3.0));
    CHECK((ds.features.row(0) - ds.features.row(1)).norm() > 0.0);
}

TEST_CASE("synthetic: deterministic, held-out pool shares centers") {
    const auto a = gen_synthetic(5, 20, 16, 0.5, 77);
    const auto b = gen_synthetic(5, 20, 16, 0.5, 77);
    CHECK(a == b);
    const auto c0 = gen_synthetic_pool(3, 1, 4, 0.0, 5, 1);
    const auto c1 = gen_synthetic_pool(3, 1, 4, 0.0, 5, 2);
    CHECK(c0.features == c1.features);
    CHECK_THROWS_AS(gen_synthetic(1, 5, 3, 1.0, 0), ConfigError);
}

TEST_CASE("synthetic: desk-scale blobs are nearly linearly separable") {
    const auto ds = gen_synthetic(5, 200, 16, 0.5, 2024);
    CHECK(linear_train_accuracy(ds) >= 95.0);
}

TEST_CASE("csv: parse with inferred classes") {
    testing::TempDir dir("csv");
    write_text(dir.path / "a.csv", "1.0,2.0,0\n3.0,4.0,1");
    const auto ds = load_dataset(dir.path / "a.csv", DataFormat::csv);
    CHECK(ds.size() == 2);
    CHECK(ds.dim() == 2);
    CHECK(ds.num_classes == 2);
    CHECK(ds.features(1, 0) == 3.0);
    CHECK(ds.labels[1] == 1);
}

TEST_CASE("csv: bad rows name the row") {
    testing::TempDir dir("csv_bad");
    write_text(dir.path / "b.csv", "1,2,0\n3,4,7\n");
    try {
        load_dataset(dir.path / "b.csv", DataFormat::csv, 3);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 1") != std::string::npos);  // rows count from 0
        CHECK(msg.find("label 7") != std::string::npos);
    }
    write_text(dir.path / "c.csv", "1,2,0\n3,0\n");
    CHECK_THROWS_AS(load_dataset(dir.path / "c.csv", DataFormat::csv), ParseError);
    write_text(dir.path / "d.csv", "1,x,0\n");
    CHECK_THROWS_AS(load_dataset(dir.path / "d.csv", DataFormat::csv), ParseError);
    write_text(dir.path / "e.csv", "1,nan,0\n");
    CHECK_THROWS_AS(load_dataset(dir.path / "e.csv", DataFormat::csv), ParseError);
}

TEST_CASE("binary: round trip of synthetic data") {
    testing::TempDir dir("bin");
    auto ds = gen_synthetic(3, 10, 5, 1.0, 8);
    // the binary format stores f32
    ds.features = ds.features.cast<float>().cast<double>();
    save_dataset_binary(ds, dir.path / "d.bin");
    const auto back = load_dataset(dir.path / "d.bin", DataFormat::binary);
    CHECK(back == ds);

    std::filesystem::resize_file(dir.path / "d.bin", 40);
    CHECK_THROWS_AS(load_dataset(dir.path / "d.bin", DataFormat::binary), ParseError);
}

TEST_CASE("standardizer: train statistics applied to both pools") {
    auto a = gen_synthetic(2, 50, 3, 2.0, 1);
    auto b = a;
    const auto st = Standardizer::fit(a);
    st.apply(a);
    for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(a.features.col(j).mean() == doctest::Approx(0.0).epsilon(1e-12));
    }
    st.apply(b);
    CHECK(a.features == b.features);
}

TEST_CASE("sampler: cycles the pool and reshuffles") {
    CyclicSampler s({3, 4, 5, 6, 7}, 1);
    const auto first = s.next(5);
    CHECK(std::set<std::size_t>(first.begin(), first.end()) == std::set<std::size_t>{3, 4, 5, 6, 7});
    const auto more = s.next(12);
    CHECK(more.size() == 12);
    std::multiset<std::size_t> counts(more.begin(), more.begin() + 10);
    for (std::size_t v = 3; v <= 7; ++v) CHECK(counts.count(v) == 2);

    CyclicSampler t({3, 4, 5, 6, 7}, 1);
    CHECK(t.next(5) == first);
}

TEST_CASE("shuffled batches: cover the pool once, last batch short") {
    IndexList pool(23);
    for (std::size_t i = 0; i < 23; ++i) pool[i] = 100 + i;
    const auto batches = shuffled_batches(pool, 5, 42);
    REQUIRE(batches.size() == 5);
    CHECK(batches.back().size() == 3);
    IndexList all;
    for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    CHECK(all == pool);
    CHECK(shuffled_batches(pool, 5, 42) == batches);
}
