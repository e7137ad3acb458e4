#include "advunlearn/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "advunlearn/errors.hpp"
#include "advunlearn/util/io.hpp"

namespace advunlearn {

std::string format_pm(double mean, double std) { return fmt::format("{:.2f}±{:.2f}", mean, std); }

std::string MetricSummary::formatted() const { return format_pm(mean, std); }

MetricSummary summarize(std::span<const double> values) {
    if (values.empty()) {
        throw EvaluationError("cannot summarize an empty metric list");
    }
    MetricSummary s;
    s.n = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(sq / static_cast<double>(s.n - 1));
    }
    return s;
}

const MetricSummary* AggregateReport::column(const std::string& name) const {
    for (const auto& [k, v] : columns) {
        if (k == name) return &v;
    }
    return nullptr;
}

AggregateReport aggregate(const std::string& label, std::span<const SeedOutcome> outcomes) {
    AggregateReport agg;
    agg.label = label;
    std::map<std::string, std::vector<double>> values;
    for (const auto& o : outcomes) {
        if (!o.ok) {
            agg.failures.push_back(fmt::format("seed {}: {}", o.seed, o.error));
            continue;
        }
        ++agg.seeds_ok;
        const auto& r = o.report;
        if (r.ua) values["UA"].push_back(*r.ua);
        if (r.mia_efficacy) values["MIA-Efficacy"].push_back(*r.mia_efficacy);
        if (r.ra) values["RA"].push_back(*r.ra);
        if (r.ta) values["TA"].push_back(*r.ta);
        if (r.avg_disparity) values["Avg. Disparity"].push_back(*r.avg_disparity);
        values["Run Time"].push_back(o.runtime_minutes);
    }
    if (agg.seeds_ok == 0) {
        throw EvaluationError("no seed completed successfully");
    }
    for (const char* col : kTableColumns) {
        const auto it = values.find(col);
        if (it != values.end() && !it->second.empty()) {
            agg.columns.emplace_back(col, summarize(it->second));
        }
    }
    return agg;
}

nlohmann::json to_json(const AggregateReport& r) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& [name, s] : r.columns) {
        cols.push_back({{"metric", name}, {"mean", s.mean}, {"std", s.std}, {"n", s.n}, {"formatted", s.formatted()}});
    }
    return {{"label", r.label}, {"seeds_ok", r.seeds_ok}, {"failures", r.failures}, {"columns", cols}};
}

AggregateReport aggregate_from_json(const nlohmann::json& j) {
    AggregateReport r;
    try {
        r.label = j.at("label").get<std::string>();
        r.seeds_ok = j.at("seeds_ok").get<std::size_t>();
        r.failures = j.at("failures").get<std::vector<std::string>>();
        for (const auto& c : j.at("columns")) {
            MetricSummary s;
            s.mean = c.at("mean").get<double>();
            s.std = c.at("std").get<double>();
            s.n = c.at("n").get<std::size_t>();
            r.columns.emplace_back(c.at("metric").get<std::string>(), s);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("aggregate report: ") + e.what());
    }
    return r;
}

namespace {

std::string cell(const AggregateReport& r, const char* col) {
    const auto* s = r.column(col);
    return s ? s->formatted() : std::string("-");
}

}  // namespace

std::string table_csv(std::span<const AggregateReport> rows) {
    std::ostringstream out;
    out << "Method";
    for (const char* c : kTableColumns) out << ',' << c;
    out << '\n';
    for (const auto& r : rows) {
        out << r.label;
        for (const char* c : kTableColumns) out << ',' << cell(r, c);
        out << '\n';
    }
    return out.str();
}

std::string table_markdown(std::span<const AggregateReport> rows) {
    std::ostringstream out;
    out << "| Method";
    for (const char* c : kTableColumns) out << " | " << c;
    out << " |\n|---";
    for (std::size_t i = 0; i < std::size(kTableColumns); ++i) out << "|---";
    out << "|\n";
    for (const auto& r : rows) {
        out << "| " << r.label;
        for (const char* c : kTableColumns) out << " | " << cell(r, c);
        out << " |\n";
    }
    return out.str();
}

std::vector<AggregateReport> collect_aggregates(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ParseError("report directory does not exist: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() == "aggregate.json") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<AggregateReport> out;
    for (const auto& f : files) {
        try {
            out.push_back(aggregate_from_json(nlohmann::json::parse(io::read_file(f))));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(f.string() + ": " + e.what());
        }
    }
    return out;
}

}  // namespace advunlearn
