#pragma once
// JSONL metric stream. Every line carries "schema" and "record":
//   "loss"   one per optimisation step (LossBreakdown fields)
//   "metric" one per epoch (MetricRecord fields)
//   "abort"  written once before a non-finite loss aborts the run
// Absent quantities are JSON null, never 0.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "semiformer/errors.hpp"
#include "semiformer/objective/losses.hpp"

namespace semiformer::train {

inline constexpr int kMetricsSchema = 1;

struct MetricRecord {
    std::int64_t step = 0;
    int epoch = 0;
    double lr = 0.0;
    std::optional<double> L;
    std::optional<double> L_l;
    std::optional<double> L_u;
    std::optional<double> coverage;
    std::optional<double> pseudo_label_accuracy;  // over retained examples only
    std::optional<double> top1_T;
    std::optional<double> top1_C;
    std::optional<double> top1_combined;
    double wall_time = 0.0;
};

namespace detail {

template <class T>
nlohmann::json opt(const std::optional<T>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> get_opt(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const MetricRecord& r) {
    return {{"schema", kMetricsSchema},
            {"record", "metric"},
            {"step", r.step},
            {"epoch", r.epoch},
            {"lr", r.lr},
            {"L", detail::opt(r.L)},
            {"L_l", detail::opt(r.L_l)},
            {"L_u", detail::opt(r.L_u)},
            {"coverage", detail::opt(r.coverage)},
            {"pseudo_label_accuracy", detail::opt(r.pseudo_label_accuracy)},
            {"top1_T", detail::opt(r.top1_T)},
            {"top1_C", detail::opt(r.top1_C)},
            {"top1_combined", detail::opt(r.top1_combined)},
            {"wall_time", r.wall_time}};
}

inline MetricRecord metric_from_json(const nlohmann::json& j) {
    MetricRecord r;
    r.step = j.at("step").get<std::int64_t>();
    r.epoch = j.at("epoch").get<int>();
    r.lr = j.at("lr").get<double>();
    r.L = detail::get_opt(j, "L");
    r.L_l = detail::get_opt(j, "L_l");
    r.L_u = detail::get_opt(j, "L_u");
    r.coverage = detail::get_opt(j, "coverage");
    r.pseudo_label_accuracy = detail::get_opt(j, "pseudo_label_accuracy");
    r.top1_T = detail::get_opt(j, "top1_T");
    r.top1_C = detail::get_opt(j, "top1_C");
    r.top1_combined = detail::get_opt(j, "top1_combined");
    r.wall_time = j.value("wall_time", 0.0);
    return r;
}

inline nlohmann::json loss_to_json(const objective::LossBreakdown& b, std::int64_t step, int epoch, double lr) {
    nlohmann::json per{{"L_l_T", b.per_stream.L_l_T}, {"L_l_C", b.per_stream.L_l_C}};
    per["L_u_T"] = b.has_unlabeled ? nlohmann::json(b.per_stream.L_u_T) : nlohmann::json(nullptr);
    per["L_u_C"] = b.has_unlabeled ? nlohmann::json(b.per_stream.L_u_C) : nlohmann::json(nullptr);
    return {{"schema", kMetricsSchema},
            {"record", "loss"},
            {"step", step},
            {"epoch", epoch},
            {"lr", lr},
            {"L_l", b.L_l},
            {"L_u", b.has_unlabeled ? nlohmann::json(b.L_u) : nlohmann::json(nullptr)},
            {"L", b.L},
            {"per_stream", per},
            {"lambda", b.lambda},
            {"retained_count", b.retained_count}};
}

/// Append-only JSONL sink; a default-constructed writer discards lines.
class MetricsWriter {
public:
    MetricsWriter() = default;
    explicit MetricsWriter(const std::filesystem::path& path, bool append = false)
        : out_(path, append ? std::ios::app : std::ios::trunc) {
        if (!out_) throw Error("cannot open metrics file " + path.string());
    }

    void write(const nlohmann::json& line) {
        if (!out_.is_open()) return;
        out_ << line.dump() << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

struct MetricStream {
    std::vector<MetricRecord> metrics;
    std::vector<nlohmann::json> metric_lines;  // raw, for byte-exact reporting
    std::vector<nlohmann::json> loss_lines;
    std::optional<nlohmann::json> abort_line;
};

/// Parses a metrics file; throws Error on unreadable or malformed content.
inline MetricStream read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read metrics file " + path.string());
    MetricStream s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (j.value("schema", 0) != kMetricsSchema)
            throw Error(path.string() + ":" + std::to_string(lineno) + ": unsupported schema");
        const auto kind = j.value("record", std::string{});
        if (kind == "metric") {
            s.metrics.push_back(metric_from_json(j));
            s.metric_lines.push_back(std::move(j));
        } else if (kind == "loss") {
            s.loss_lines.push_back(std::move(j));
        } else if (kind == "abort") {
            s.abort_line = std::move(j);
        } else {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": unknown record kind");
        }
    }
    return s;
}

}  // namespace semiformer::train
