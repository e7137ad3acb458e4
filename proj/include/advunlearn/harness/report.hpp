#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advunlearn/mia_eval.hpp"

namespace advunlearn {

/// Report column order.
inline constexpr const char* kTableColumns[] = {"UA", "MIA-Efficacy", "RA", "TA", "Avg. Disparity", "Run Time"};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1); 0 for n = 1
    std::size_t n = 0;

    /// "mean±std" with two decimals.
    std::string formatted() const;
};

/// Throws EvaluationError for an empty list.
MetricSummary summarize(std::span<const double> values);
std::string format_pm(double mean, double std);

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricsReport report;
    double runtime_minutes = 0.0;
};

struct AggregateReport {
    std::string label;
    std::size_t seeds_ok = 0;
    std::vector<std::string> failures;  // "seed N: message"
    /// One entry per report column that has at least one value.
    std::vector<std::pair<std::string, MetricSummary>> columns;

    const MetricSummary* column(const std::string& name) const;
};

/// Aggregates the successful seeds. Throws EvaluationError if none succeeded.
AggregateReport aggregate(const std::string& label, std::span<const SeedOutcome> outcomes);

nlohmann::json to_json(const AggregateReport& r);
AggregateReport aggregate_from_json(const nlohmann::json& j);

/// Table rows, one per aggregate.
std::string table_csv(std::span<const AggregateReport> rows);
std::string table_markdown(std::span<const AggregateReport> rows);

/// All aggregate.json files under `dir` (recursively), sorted by path.
std::vector<AggregateReport> collect_aggregates(const std::filesystem::path& dir);

}  // namespace advunlearn
