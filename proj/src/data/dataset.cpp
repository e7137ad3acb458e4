#include "advunlearn/data/dataset.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>

#include "advunlearn/errors.hpp"
#include "advunlearn/util/io.hpp"

namespace advunlearn {

void LabeledDataset::validate() const {
    if (labels.empty()) {
        throw ParseError("dataset is empty");
    }
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw ParseError("feature rows (" + std::to_string(features.rows()) +
                         ") != label count (" + std::to_string(labels.size()) + ")");
    }
    if (num_classes < 1) {
        throw ParseError("class count must be positive");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw ParseError("row " + std::to_string(i) + ": label " + std::to_string(labels[i]) +
                             " outside [0, " + std::to_string(num_classes) + ")");
        }
        if (!features.row(static_cast<Eigen::Index>(i)).allFinite()) {
            throw ParseError("row " + std::to_string(i) + ": non-finite feature");
        }
    }
}

Matrix LabeledDataset::rows(std::span<const std::size_t> idx) const {
    Matrix out(static_cast<Eigen::Index>(idx.size()), features.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(idx[i]));
    }
    return out;
}

std::vector<int> LabeledDataset::labels_at(std::span<const std::size_t> idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        out.push_back(labels.at(i));
    }
    return out;
}

bool operator==(const LabeledDataset& a, const LabeledDataset& b) {
    return a.num_classes == b.num_classes && a.labels == b.labels &&
           a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
           a.features == b.features;
}

Standardizer Standardizer::fit(const LabeledDataset& ds) {
    Standardizer s;
    s.mean = ds.features.colwise().mean();
    const Matrix centered = ds.features.rowwise() - s.mean;
    const double n = static_cast<double>(std::max<Eigen::Index>(1, ds.features.rows()));
    s.scale = (centered.array().square().colwise().sum() / n).sqrt().matrix();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
        if (s.scale[j] < 1e-12) {
            s.scale[j] = 1.0;
        }
    }
    return s;
}

void Standardizer::apply(LabeledDataset& ds) const {
    ds.features = ((ds.features.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

namespace {

Matrix draw_centers(int k, std::size_t dim, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix centers(k, static_cast<Eigen::Index>(dim));
    for (int c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < dim; ++j) {
            centers(c, static_cast<Eigen::Index>(j)) = normal(rng);
        }
        centers.row(c) *= 3.0 / centers.row(c).norm();
    }
    return centers;
}

LabeledDataset blobs(const Matrix& centers, std::size_t n_per_class, double spread, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto k = static_cast<int>(centers.rows());
    LabeledDataset ds;
    ds.num_classes = k;
    ds.features.resize(static_cast<Eigen::Index>(n_per_class) * k, centers.cols());
    ds.labels.reserve(n_per_class * static_cast<std::size_t>(k));
    Eigen::Index row = 0;
    for (int c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            for (Eigen::Index j = 0; j < centers.cols(); ++j) {
                ds.features(row, j) = centers(c, j) + spread * normal(rng);
            }
            ds.labels.push_back(c);
        }
    }
    return ds;
}

void check_synthetic_args(int num_classes, std::size_t dim, double spread) {
    if (num_classes < 2) {
        throw ConfigError("synthetic data needs at least 2 classes");
    }
    if (dim < 2) {
        throw ConfigError("synthetic data needs dim >= 2");
    }
    if (!(spread >= 0.0)) {
        throw ConfigError("synthetic spread must be nonnegative");
    }
}

}  // namespace

LabeledDataset gen_synthetic(int num_classes, std::size_t n_per_class, std::size_t dim,
                             double spread, std::uint64_t seed) {
    check_synthetic_args(num_classes, dim, spread);
    Rng rng(seed);
    const Matrix centers = draw_centers(num_classes, dim, rng);
    return blobs(centers, n_per_class, spread, rng);
}

LabeledDataset gen_synthetic_pool(int num_classes, std::size_t n_per_class, std::size_t dim,
                                  double spread, std::uint64_t seed, std::uint64_t noise_seed) {
    check_synthetic_args(num_classes, dim, spread);
    Rng center_rng(seed);
    const Matrix centers = draw_centers(num_classes, dim, center_rng);
    Rng noise_rng(noise_seed);
    return blobs(centers, n_per_class, spread, noise_rng);
}

namespace {

LabeledDataset load_csv(const std::filesystem::path& path, std::optional<int> declared) {
    std::istringstream in(io::read_file(path));
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t row = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        std::vector<double> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            const char* begin = cell.c_str();
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin || std::string_view(end).find_first_not_of(" \t") != std::string_view::npos) {
                throw ParseError(path.string() + ": row " + std::to_string(row) + ": cannot parse '" +
                                 cell + "'");
            }
            cells.push_back(v);
        }
        if (cells.size() < 2) {
            throw ParseError(path.string() + ": row " + std::to_string(row) +
                             ": need at least one feature and a label");
        }
        if (width == 0) {
            width = cells.size();
        } else if (cells.size() != width) {
            throw ParseError(path.string() + ": row " + std::to_string(row) + ": expected " +
                             std::to_string(width) + " columns, got " + std::to_string(cells.size()));
        }
        const double lab = cells.back();
        if (lab < 0 || lab != std::floor(lab)) {
            throw ParseError(path.string() + ": row " + std::to_string(row) + ": label must be a nonnegative integer");
        }
        labels.push_back(static_cast<int>(lab));
        cells.pop_back();
        for (double v : cells) {
            if (!std::isfinite(v)) {
                throw ParseError(path.string() + ": row " + std::to_string(row) + ": non-finite feature");
            }
        }
        rows.push_back(std::move(cells));
        ++row;
    }
    if (rows.empty()) {
        throw ParseError(path.string() + ": no samples");
    }
    LabeledDataset ds;
    ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j + 1 < width; ++j) {
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    ds.labels = std::move(labels);
    int max_label = 0;
    for (int l : ds.labels) {
        max_label = std::max(max_label, l);
    }
    ds.num_classes = declared.value_or(max_label + 1);
    try {
        ds.validate();
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return ds;
}

LabeledDataset load_binary(const std::filesystem::path& path, std::optional<int> declared) {
    std::istringstream in(io::read_file(path));
    const auto n = io::read_le<std::uint64_t>(in, "header N");
    const auto dim = io::read_le<std::uint64_t>(in, "header dim");
    const auto k = io::read_le<std::uint64_t>(in, "header K");
    if (n == 0 || dim == 0 || k == 0 || n > (1ULL << 32) || dim > (1ULL << 24) || k > (1ULL << 24)) {
        throw ParseError(path.string() + ": malformed header (N=" + std::to_string(n) +
                         ", dim=" + std::to_string(dim) + ", K=" + std::to_string(k) + ")");
    }
    if (declared && static_cast<std::uint64_t>(*declared) != k) {
        throw ParseError(path.string() + ": header K=" + std::to_string(k) +
                         " disagrees with declared K=" + std::to_string(*declared));
    }
    LabeledDataset ds;
    ds.num_classes = static_cast<int>(k);
    ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint64_t j = 0; j < dim; ++j) {
            const float v = io::read_f32(in, "features");
            if (!std::isfinite(v)) {
                throw ParseError(path.string() + ": row " + std::to_string(i) + ": non-finite feature");
            }
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }
    ds.labels.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto lab = io::read_le<std::uint32_t>(in, "labels");
        if (lab >= k) {
            throw ParseError(path.string() + ": row " + std::to_string(i) + ": label " +
                             std::to_string(lab) + " >= K=" + std::to_string(k));
        }
        ds.labels[i] = static_cast<int>(lab);
    }
    return ds;
}

}  // namespace

LabeledDataset load_dataset(const std::filesystem::path& path, DataFormat format,
                            std::optional<int> declared_classes) {
    return format == DataFormat::csv ? load_csv(path, declared_classes)
                                     : load_binary(path, declared_classes);
}

void save_dataset_binary(const LabeledDataset& ds, const std::filesystem::path& path) {
    ds.validate();
    std::ostringstream out;
    io::write_le(out, static_cast<std::uint64_t>(ds.size()));
    io::write_le(out, static_cast<std::uint64_t>(ds.dim()));
    io::write_le(out, static_cast<std::uint64_t>(ds.num_classes));
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
        for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
            io::write_f32(out, static_cast<float>(ds.features(i, j)));
        }
    }
    for (int l : ds.labels) {
        io::write_le(out, static_cast<std::uint32_t>(l));
    }
    io::write_file_atomic(path, out.str());
}

}  // namespace advunlearn
