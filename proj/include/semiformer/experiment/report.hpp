#pragma once
// Comparison report over finished run directories: markdown summary, CSVs
// and SVG plots. Per-run numbers are copied verbatim from the metric stream
// (same JSON text), with the file path and step they came from.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "semiformer/errors.hpp"
#include "semiformer/experiment/config.hpp"
#include "semiformer/experiment/svg.hpp"
#include "semiformer/train/metrics.hpp"

namespace semiformer::experiment {

struct RunRecord {
    std::filesystem::path dir;
    std::filesystem::path metrics_path;
    ExperimentConfig config;
    train::MetricStream stream;
    std::size_t final_index = 0;  // into stream.metrics: last evaluated epoch

    std::string name() const { return dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string(); }
    const train::MetricRecord& final_metric() const { return stream.metrics[final_index]; }
    const nlohmann::json& final_line() const { return stream.metric_lines[final_index]; }
};

/// Variant name, plus the teacher when it is not the variant's default.
inline std::string condition(const ExperimentConfig& c) {
    const auto& v = c.train.variant;
    auto s = objective::to_string(v.name);
    if (v.pseudo_source != objective::MethodVariant::make(v.name).pseudo_source)
        s += "/" + objective::to_string(v.pseudo_source);
    return s;
}

struct GroupRow {
    std::string condition;
    double label_fraction = 0.0;
    std::vector<std::size_t> runs;
    std::optional<double> top1_T, top1_C;
    double top1_combined = 0.0;
};

struct ComparisonReport {
    std::vector<RunRecord> runs;
    std::vector<std::string> warnings;
    std::vector<GroupRow> groups;  // first-appearance order
    std::size_t reference = 0;     // group the delta columns are relative to
};

namespace detail {

/// Metric value exactly as stored in the stream, "-" when absent.
inline std::string exact(const nlohmann::json& line, const char* key) {
    if (!line.contains(key) || line.at(key).is_null()) return "-";
    return line.at(key).dump();
}

inline std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string signed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f", v);
    return buf;
}

inline std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g%%", fraction * 100.0);
    return buf;
}

inline std::optional<double> mean_of(const std::vector<std::optional<double>>& v) {
    double s = 0;
    for (const auto& x : v) {
        if (!x) return std::nullopt;
        s += *x;
    }
    return v.empty() ? std::nullopt : std::optional<double>(s / static_cast<double>(v.size()));
}

inline std::string csv_opt(const std::optional<double>& v, const nlohmann::json& line, const char* key) {
    return v ? exact(line, key) : std::string();
}

}  // namespace detail

/// Loads every run; unreadable runs become warnings.
inline ComparisonReport build_report(const std::vector<std::filesystem::path>& run_dirs) {
    ComparisonReport rep;
    for (const auto& dir : run_dirs) {
        RunRecord r;
        r.dir = dir;
        r.metrics_path = dir / "metrics.jsonl";
        try {
            r.config = load_config(dir / "config.ini");
            r.stream = train::read_metrics(r.metrics_path);
        } catch (const std::exception& e) {
            rep.warnings.push_back(dir.string() + ": skipped (" + e.what() + ")");
            continue;
        }
        std::optional<std::size_t> last;
        for (std::size_t i = 0; i < r.stream.metrics.size(); ++i)
            if (r.stream.metrics[i].top1_combined) last = i;
        if (!last) {
            rep.warnings.push_back(dir.string() + ": skipped (no evaluated epoch in " + r.metrics_path.string() + ")");
            continue;
        }
        r.final_index = *last;
        if (r.stream.abort_line) rep.warnings.push_back(dir.string() + ": run aborted on a non-finite loss");
        rep.runs.push_back(std::move(r));
    }

    for (std::size_t i = 0; i < rep.runs.size(); ++i) {
        const auto& r = rep.runs[i];
        const auto cond = condition(r.config);
        const auto frac = r.config.data.split.label_fraction;
        auto it = std::find_if(rep.groups.begin(), rep.groups.end(),
                               [&](const GroupRow& g) { return g.condition == cond && g.label_fraction == frac; });
        if (it == rep.groups.end()) {
            rep.groups.push_back({cond, frac, {}, {}, {}, 0.0});
            it = rep.groups.end() - 1;
        }
        it->runs.push_back(i);
    }
    for (auto& g : rep.groups) {
        std::vector<std::optional<double>> t, c;
        double comb = 0;
        for (auto i : g.runs) {
            const auto& m = rep.runs[i].final_metric();
            t.push_back(m.top1_T);
            c.push_back(m.top1_C);
            comb += *m.top1_combined;
        }
        g.top1_T = detail::mean_of(t);
        g.top1_C = detail::mean_of(c);
        g.top1_combined = comb / static_cast<double>(g.runs.size());
    }
    for (std::size_t k = 0; k < rep.groups.size(); ++k)
        if (rep.groups[k].condition == "sup") {
            rep.reference = k;
            break;
        }
    return rep;
}

inline std::string final_accuracy_csv(const ComparisonReport& rep) {
    std::ostringstream o;
    o << "run,condition,label_fraction,seed,epoch,step,top1_T,top1_C,top1_combined,metrics_file\n";
    for (const auto& r : rep.runs) {
        const auto& m = r.final_metric();
        const auto& line = r.final_line();
        o << r.name() << "," << condition(r.config) << "," << r.config.data.split.label_fraction << ","
          << r.config.train.seed << "," << m.epoch << "," << m.step << "," << detail::csv_opt(m.top1_T, line, "top1_T")
          << "," << detail::csv_opt(m.top1_C, line, "top1_C") << "," << detail::exact(line, "top1_combined") << ","
          << r.metrics_path.string() << "\n";
    }
    return o.str();
}

inline std::string curves_csv(const ComparisonReport& rep) {
    std::ostringstream o;
    o << "run,epoch,step,lr,L,L_l,L_u,coverage,pseudo_label_accuracy,top1_T,top1_C,top1_combined\n";
    for (const auto& r : rep.runs) {
        for (const auto& line : r.stream.metric_lines) {
            o << r.name() << "," << line.at("epoch").dump() << "," << line.at("step").dump() << ","
              << line.at("lr").dump();
            for (const char* key : {"L", "L_l", "L_u", "coverage", "pseudo_label_accuracy", "top1_T", "top1_C",
                                    "top1_combined"}) {
                const auto v = detail::exact(line, key);
                o << "," << (v == "-" ? "" : v);
            }
            o << "\n";
        }
    }
    return o.str();
}

inline std::vector<svg::Series> curve_series(const ComparisonReport& rep,
                                             std::optional<double> train::MetricRecord::*field) {
    std::vector<svg::Series> out;
    for (const auto& r : rep.runs) {
        svg::Series s{r.name(), {}, {}};
        for (const auto& m : r.stream.metrics) {
            if (!(m.*field)) continue;
            s.x.push_back(m.epoch + 1);
            s.y.push_back(*(m.*field));
        }
        if (!s.x.empty()) out.push_back(std::move(s));
    }
    return out;
}

inline std::string markdown(const ComparisonReport& rep) {
    std::ostringstream o;
    o << "# Experiment report\n\n";
    o << "## Runs\n\n";
    o << "Final evaluated epoch of each run, values as written in the metric stream.\n\n";
    o << "| run | condition | labels | seed | epoch | top1_T | top1_C | top1_combined | source |\n";
    o << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rep.runs) {
        const auto& m = r.final_metric();
        const auto& line = r.final_line();
        o << "| " << r.name() << " | " << condition(r.config) << " | "
          << detail::percent(r.config.data.split.label_fraction) << " | " << r.config.train.seed << " | " << m.epoch
          << " | " << detail::exact(line, "top1_T") << " | " << detail::exact(line, "top1_C") << " | "
          << detail::exact(line, "top1_combined") << " | `" << r.metrics_path.string() << "` step " << m.step << " |\n";
    }

    if (rep.runs.size() > 1 && rep.groups.size() > 1) {
        const auto& ref = rep.groups[rep.reference];
        o << "\n## Comparison\n\n";
        o << "Means over seeds of the values above. Deltas are relative to " << ref.condition << " at "
          << detail::percent(ref.label_fraction) << " labels.\n\n";
        o << "| condition | labels | runs | top1_T | top1_C | top1_combined | dT | dC | dcombined |\n";
        o << "|---|---|---|---|---|---|---|---|---|\n";
        auto cell = [](const std::optional<double>& v) { return v ? detail::fixed2(*v) : std::string("-"); };
        auto delta = [](const std::optional<double>& a, const std::optional<double>& b) {
            return a && b ? detail::signed2(*a - *b) : std::string("-");
        };
        for (const auto& g : rep.groups) {
            std::string names;
            for (auto i : g.runs) names += (names.empty() ? "" : ", ") + rep.runs[i].name();
            o << "| " << g.condition << " | " << detail::percent(g.label_fraction) << " | " << names << " | "
              << cell(g.top1_T) << " | " << cell(g.top1_C) << " | " << detail::fixed2(g.top1_combined) << " | "
              << delta(g.top1_T, ref.top1_T) << " | " << delta(g.top1_C, ref.top1_C) << " | "
              << detail::signed2(g.top1_combined - ref.top1_combined) << " |\n";
        }
    }

    std::map<std::string, std::vector<const GroupRow*>> sweeps;
    for (const auto& g : rep.groups) sweeps[g.condition].push_back(&g);
    bool header = false;
    for (auto& [cond, rows] : sweeps) {
        if (rows.size() < 2) continue;
        if (!header) {
            o << "\n## Label-ratio sweep\n\n";
            o << "| condition | labels | runs | top1_combined | change vs previous |\n|---|---|---|---|---|\n";
            header = true;
        }
        std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->label_fraction < b->label_fraction; });
        for (std::size_t k = 0; k < rows.size(); ++k) {
            o << "| " << cond << " | " << detail::percent(rows[k]->label_fraction) << " | " << rows[k]->runs.size()
              << " | " << detail::fixed2(rows[k]->top1_combined) << " | "
              << (k ? detail::signed2(rows[k]->top1_combined - rows[k - 1]->top1_combined) : std::string("-")) << " |\n";
        }
    }

    o << "\n## Plots\n\n";
    o << "- accuracy.svg: top1_combined per epoch\n";
    o << "- coverage.svg: fraction of unlabeled examples above the threshold\n";
    o << "- pseudo_label_accuracy.svg: accuracy of retained pseudo labels\n";
    if (rep.runs.size() > 1) o << "- final_accuracy.svg: final top-1 per run\n";
    o << "- curves.csv, final_accuracy.csv: the plotted data\n";

    if (!rep.warnings.empty()) {
        o << "\n## Warnings\n\n";
        for (const auto& w : rep.warnings) o << "- " << w << "\n";
    }
    return o.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

/// Writes report.md, CSVs and plots into `out_dir`; returns the written files.
inline std::vector<std::filesystem::path> write_report(const ComparisonReport& rep, const std::filesystem::path& out_dir) {
    if (rep.runs.empty()) throw Error("no readable runs to report on");
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> files;
    auto put = [&](const std::string& name, const std::string& text) {
        write_file(out_dir / name, text);
        files.push_back(out_dir / name);
    };
    put("report.md", markdown(rep));
    put("final_accuracy.csv", final_accuracy_csv(rep));
    put("curves.csv", curves_csv(rep));
    put("accuracy.svg", svg::line_plot("Top-1 (combined) vs epoch", "epoch", "top-1 %",
                                       curve_series(rep, &train::MetricRecord::top1_combined)));
    put("coverage.svg", svg::line_plot("Pseudo-label coverage", "epoch", "coverage",
                                       curve_series(rep, &train::MetricRecord::coverage)));
    put("pseudo_label_accuracy.svg", svg::line_plot("Pseudo-label accuracy (retained)", "epoch", "accuracy %",
                                                    curve_series(rep, &train::MetricRecord::pseudo_label_accuracy)));
    if (rep.runs.size() > 1) {
        std::vector<svg::Bar> bars;
        for (const auto& r : rep.runs) {
            const auto& m = r.final_metric();
            bars.push_back({r.name(), {m.top1_T, m.top1_C, m.top1_combined}});
        }
        put("final_accuracy.svg", svg::bar_chart("Final top-1", "top-1 %", {"transformer", "conv", "combined"}, bars));
    }
    return files;
}

}  // namespace semiformer::experiment
