#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "advunlearn/data/dataset.hpp"
#include "advunlearn/data/splits.hpp"
#include "advunlearn/defender.hpp"
#include "advunlearn/nn/attention.hpp"
#include "advunlearn/nn/tensor.hpp"

namespace testing {

using namespace advunlearn;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = normal(rng);
    }
    return m;
}

inline Matrix random_probs(Eigen::Index rows, Eigen::Index k, std::uint64_t seed) {
    return softmax_rows(random_matrix(rows, k, seed, 2.0));
}

// Small blobs problem shared by engine/baseline/harness tests.
struct Toy {
    LabeledDataset train;
    LabeledDataset eval;
    SplitSet splits;
};

inline Toy make_toy(ForgetKind kind = ForgetKind::random_fraction, int k = 3, std::size_t per_class = 30,
                    std::size_t dim = 6, std::uint64_t seed = 11) {
    Toy t;
    t.train = gen_synthetic(k, per_class, dim, 1.0, seed);
    t.eval = gen_synthetic_pool(k, per_class, dim, 1.0, seed, seed + 1);
    ForgetScheme s;
    s.kind = kind;
    s.fraction = 0.2;
    s.class_id = 1;
    s.seed = 5;
    t.splits = make_splits(t.train, t.eval, s);
    return t;
}

inline DefenderArch small_arch(const LabeledDataset& ds) {
    DefenderArch a;
    a.input_dim = ds.dim();
    a.hidden = {12};
    a.feature_dim = 8;
    a.num_classes = ds.num_classes;
    return a;
}

inline AttentionConfig small_attention() {
    AttentionConfig c;
    c.num_layers = 1;
    c.num_heads = 2;
    c.model_dim = 8;
    return c;
}

// Per-test scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("advunlearn_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace testing
