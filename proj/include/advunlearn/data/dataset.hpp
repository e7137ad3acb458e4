#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "advunlearn/nn/tensor.hpp"

namespace advunlearn {

using IndexList = std::vector<std::size_t>;

struct LabeledDataset {
    Matrix features;  // N x input_dim
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

    /// Throws ParseError if N == 0, shapes disagree, a label is outside
    /// [0, num_classes) or any feature is non-finite.
    void validate() const;

    Matrix rows(std::span<const std::size_t> idx) const;
    std::vector<int> labels_at(std::span<const std::size_t> idx) const;
};

bool operator==(const LabeledDataset& a, const LabeledDataset& b);

/// Per-dimension mean and standard deviation fitted on one dataset.
struct Standardizer {
    RowVector mean;
    RowVector scale;

    static Standardizer fit(const LabeledDataset& ds);
    void apply(LabeledDataset& ds) const;
};

/// Gaussian blobs: class c is centered at a seeded random unit-sphere point
/// scaled by 3, with isotropic std `spread`. Labels are balanced and samples
/// are ordered class-major. Throws ConfigError unless K >= 2 and dim >= 2.
LabeledDataset gen_synthetic(int num_classes, std::size_t n_per_class, std::size_t dim,
                             double spread, std::uint64_t seed);

/// Same centers as gen_synthetic(…, seed) but fresh noise from `noise_seed`;
/// used to draw a held-out pool from the training distribution.
LabeledDataset gen_synthetic_pool(int num_classes, std::size_t n_per_class, std::size_t dim,
                                  double spread, std::uint64_t seed, std::uint64_t noise_seed);

enum class DataFormat { csv, binary };

/// CSV: one row per sample, label in the last column, K = max label + 1 unless
/// `declared_classes` is given. Binary: u64 N, u64 dim, u64 K, then N*dim f32
/// row-major, then N u32 labels. Errors name the offending row.
LabeledDataset load_dataset(const std::filesystem::path& path, DataFormat format,
                            std::optional<int> declared_classes = std::nullopt);

/// Writes the binary format (features narrowed to f32).
void save_dataset_binary(const LabeledDataset& ds, const std::filesystem::path& path);

}  // namespace advunlearn
