#pragma once
// Experiment config file: sections of `key = value` lines, `#` comments.
//
//   [run]        output_dir
//   [data]       dataset, label_fraction, split_seed, stratified, split_file,
//                data_dir, train_subset, eval_subset, synthetic_*, mean, stddev
//   [augment]    weak / strong augmentation parameters
//   [train]      TrainConfig, variant, pseudo_source, label_smoothing
//   [model]      stream switches, backbone sizes, fusion points
//
// Lists are comma separated. `fusion = default` picks the standard points for
// the configured streams, `none` disables fusion, otherwise `block:stage`
// pairs (optionally `block:stage:align_dim`).

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "semiformer/data/augment.hpp"
#include "semiformer/data/dataset.hpp"
#include "semiformer/data/split.hpp"
#include "semiformer/errors.hpp"
#include "semiformer/models/config.hpp"
#include "semiformer/train/config.hpp"

namespace semiformer::experiment {

struct DataConfig {
    data::SplitSpec split{};
    std::string split_file;  // empty: derive the split from `split`
    std::string data_dir;    // empty: $SEMIFORMER_DATA_DIR or ./data
    std::int64_t train_subset = 0;  // class-balanced prefix, 0 = all
    std::int64_t eval_subset = 0;
    data::SyntheticOptions synthetic{};
    std::vector<double> mean;    // empty: dataset defaults
    std::vector<double> stddev;

    bool operator==(const DataConfig&) const = default;
};

struct ModelSection {
    bool transformer = true;
    int patch_size = 4;
    int embed_dim = 192;
    int depth = 6;
    int heads = 3;
    double mlp_ratio = 4.0;
    bool conv = true;
    std::vector<int> stage_channels{64, 128, 256};
    std::vector<int> stage_depths{1, 1, 1};
    std::vector<int> downsample_factors{1, 2, 2};
    std::string fusion = "default";
    models::UpsampleMode upsample = models::UpsampleMode::nearest;
    models::FusionOrder order = models::FusionOrder::symmetric;
    bool check_finite = true;

    bool operator==(const ModelSection&) const = default;
};

struct ExperimentConfig {
    std::string output_dir = "runs/default";
    DataConfig data{};
    data::WeakParams weak{};
    data::StrongParams strong{};
    train::TrainConfig train{};
    ModelSection model{};

    bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    return out;
}

template <class T>
std::string num(T v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

template <class T>
T parse_num(const std::string& s, const std::string& key) {
    T v{};
    const auto t = trim(s);
    auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || end != t.data() + t.size() || t.empty())
        throw ConfigError(key + ": cannot parse '" + s + "' as a number");
    return v;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
    const auto t = trim(s);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + s + "'");
}

template <class T>
std::string num_list(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + num(v[i]);
    return out;
}

template <class T>
std::vector<T> parse_num_list(const std::string& s, const std::string& key) {
    std::vector<T> out;
    for (const auto& item : split_list(s)) out.push_back(parse_num<T>(item, key));
    return out;
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

template <class T>
Field number(std::string section, std::string key, T& ref) {
    const auto name = section + "." + key;
    return {section, key, [&ref] { return num(ref); }, [&ref, name](const std::string& v) { ref = parse_num<T>(v, name); }};
}

inline Field boolean(std::string section, std::string key, bool& ref) {
    const auto name = section + "." + key;
    return {section, key, [&ref] { return std::string(ref ? "true" : "false"); },
            [&ref, name](const std::string& v) { ref = parse_bool(v, name); }};
}

inline Field text(std::string section, std::string key, std::string& ref) {
    return {section, key, [&ref] { return ref; }, [&ref](const std::string& v) { ref = trim(v); }};
}

template <class T>
Field list(std::string section, std::string key, std::vector<T>& ref) {
    const auto name = section + "." + key;
    return {section, key, [&ref] { return num_list(ref); },
            [&ref, name](const std::string& v) { ref = parse_num_list<T>(v, name); }};
}

inline std::vector<Field> fields(ExperimentConfig& c) {
    auto& d = c.data;
    auto& t = c.train;
    auto& m = c.model;
    auto& s = c.strong;
    return {
        text("run", "output_dir", c.output_dir),

        text("data", "dataset", d.split.dataset_id),
        number("data", "label_fraction", d.split.label_fraction),
        number("data", "split_seed", d.split.seed),
        boolean("data", "stratified", d.split.stratified),
        text("data", "split_file", d.split_file),
        text("data", "data_dir", d.data_dir),
        number("data", "train_subset", d.train_subset),
        number("data", "eval_subset", d.eval_subset),
        number("data", "synthetic_train_per_class", d.synthetic.train_per_class),
        number("data", "synthetic_test_per_class", d.synthetic.test_per_class),
        number("data", "synthetic_seed", d.synthetic.seed),
        number("data", "synthetic_noise", d.synthetic.noise),
        list("data", "mean", d.mean),
        list("data", "stddev", d.stddev),

        number("augment", "weak_flip_prob", c.weak.flip_prob),
        number("augment", "weak_pad", c.weak.pad),
        number("augment", "strong_flip_prob", s.base.flip_prob),
        number("augment", "strong_pad", s.base.pad),
        number("augment", "strong_num_ops", s.num_ops),
        number("augment", "strong_magnitude", s.magnitude),
        number("augment", "strong_jitter", s.jitter),
        number("augment", "erase_prob", s.erase_prob),
        number("augment", "erase_scale_min", s.erase_scale[0]),
        number("augment", "erase_scale_max", s.erase_scale[1]),
        number("augment", "erase_ratio_min", s.erase_ratio[0]),
        number("augment", "erase_ratio_max", s.erase_ratio[1]),
        number("augment", "erase_fill", s.erase_fill),

        number("train", "total_epochs", t.total_epochs),
        number("train", "warmup_epochs", t.warmup_epochs),
        number("train", "labeled_only_epochs", t.labeled_only_epochs),
        number("train", "lr_init", t.lr_init),
        number("train", "lr_final", t.lr_final),
        number("train", "n_l", t.n_l),
        number("train", "mu", t.mu),
        number("train", "tau", t.tau),
        number("train", "lambda", t.lambda),
        number("train", "seed", t.seed),
        boolean("train", "deterministic", t.deterministic),
        number("train", "eval_every", t.eval_every),
        {"train", "variant", [&t] { return objective::to_string(t.variant.name); },
         [&t](const std::string& v) { t.variant.name = objective::parse_variant(trim(v)); }},
        {"train", "pseudo_source", [&t] { return objective::to_string(t.variant.pseudo_source); },
         [&t](const std::string& v) { t.variant.pseudo_source = objective::parse_pseudo_source(trim(v)); }},
        number("train", "label_smoothing", t.variant.label_smoothing),
        number("train", "weight_decay", t.weight_decay),
        number("train", "beta1", t.beta1),
        number("train", "beta2", t.beta2),
        number("train", "grad_clip", t.grad_clip),
        number("train", "workers", t.workers),
        boolean("train", "keep_all_checkpoints", t.keep_all_checkpoints),

        boolean("model", "transformer", m.transformer),
        number("model", "patch_size", m.patch_size),
        number("model", "embed_dim", m.embed_dim),
        number("model", "depth", m.depth),
        number("model", "heads", m.heads),
        number("model", "mlp_ratio", m.mlp_ratio),
        boolean("model", "conv", m.conv),
        list("model", "stage_channels", m.stage_channels),
        list("model", "stage_depths", m.stage_depths),
        list("model", "downsample_factors", m.downsample_factors),
        text("model", "fusion", m.fusion),
        {"model", "upsample", [&m] { return std::string(m.upsample == models::UpsampleMode::nearest ? "nearest" : "bilinear"); },
         [&m](const std::string& v) {
             const auto t = trim(v);
             if (t == "nearest") m.upsample = models::UpsampleMode::nearest;
             else if (t == "bilinear") m.upsample = models::UpsampleMode::bilinear;
             else throw ConfigError("model.upsample: expected nearest|bilinear, got '" + v + "'");
         }},
        {"model", "fusion_order", [&m] { return std::string(m.order == models::FusionOrder::symmetric ? "symmetric" : "sequential"); },
         [&m](const std::string& v) {
             const auto t = trim(v);
             if (t == "symmetric") m.order = models::FusionOrder::symmetric;
             else if (t == "sequential") m.order = models::FusionOrder::sequential;
             else throw ConfigError("model.fusion_order: expected symmetric|sequential, got '" + v + "'");
         }},
        boolean("model", "check_finite", m.check_finite),
    };
}

}  // namespace detail

/// Parses the `fusion` value; "default" needs the stream configs and is
/// expanded by `model_config`.
inline std::vector<models::FusionPoint> parse_fusion_points(const std::string& value) {
    std::vector<models::FusionPoint> points;
    const auto v = detail::trim(value);
    if (v == "none" || v.empty()) return points;
    for (const auto& item : detail::split_list(v)) {
        std::vector<int> parts;
        std::stringstream in(item);
        std::string p;
        while (std::getline(in, p, ':')) parts.push_back(detail::parse_num<int>(p, "model.fusion"));
        if (parts.size() != 2 && parts.size() != 3)
            throw ConfigError("model.fusion: expected block:stage[:align_dim], got '" + item + "'");
        points.push_back({parts[0], parts[1], parts.size() == 3 ? parts[2] : 0});
    }
    return points;
}

inline std::string format_fusion_points(const std::vector<models::FusionPoint>& points) {
    if (points.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        out += (i ? "," : "") + std::to_string(p.transformer_block_index) + ":" + std::to_string(p.conv_stage_index);
        if (p.align_dim != 0) out += ":" + std::to_string(p.align_dim);
    }
    return out;
}

/// Sets one `section.key`; unknown keys are configuration errors.
inline void set_value(ExperimentConfig& c, const std::string& dotted_key, const std::string& value) {
    const auto dot = dotted_key.find('.');
    if (dot == std::string::npos) throw ConfigError("expected section.key, got '" + dotted_key + "'");
    const auto section = dotted_key.substr(0, dot), key = dotted_key.substr(dot + 1);
    for (auto& f : detail::fields(c)) {
        if (f.section == section && f.key == key) {
            f.set(value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + dotted_key + "'");
}

inline std::string serialize(const ExperimentConfig& config) {
    auto c = config;
    std::string out;
    std::string section;
    for (const auto& f : detail::fields(c)) {
        if (f.section != section) {
            out += (section.empty() ? "" : "\n") + std::string("[") + f.section + "]\n";
            section = f.section;
        }
        const auto v = f.get();
        out += f.key + (v.empty() ? " =\n" : " = " + v + "\n");
    }
    return out;
}

/// Applies the file's values on top of `base` (defaults unless given).
inline ExperimentConfig parse(const std::string& text, ExperimentConfig base = {}) {
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = detail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        const auto where = "line " + std::to_string(lineno) + ": ";
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + "malformed section header");
            section = detail::trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        if (section.empty()) throw ConfigError(where + "key outside of a section");
        try {
            set_value(base, section + "." + detail::trim(t.substr(0, eq)), t.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), std::move(base));
}

inline void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write config file " + path.string());
    out << serialize(c);
}

/// Full model config: input shape and class count come from the dataset.
inline models::ModelConfig model_config(const ExperimentConfig& c) {
    const auto info = data::dataset_info(c.data.split.dataset_id);
    const auto& s = c.model;
    models::ModelConfig m;
    m.transformer.reset();
    m.conv.reset();
    if (s.transformer) {
        models::TransformerStreamConfig t;
        t.image_size = info.height;
        t.in_channels = info.channels;
        t.patch_size = s.patch_size;
        t.embed_dim = s.embed_dim;
        t.depth = s.depth;
        t.heads = s.heads;
        t.mlp_ratio = s.mlp_ratio;
        t.num_classes = info.num_classes;
        m.transformer = t;
    }
    if (s.conv) {
        models::ConvStreamConfig k;
        k.image_size = info.height;
        k.in_channels = info.channels;
        k.stage_channels = s.stage_channels;
        k.stage_depths = s.stage_depths;
        k.downsample_factors = s.downsample_factors;
        k.num_classes = info.num_classes;
        m.conv = k;
    }
    if (detail::trim(s.fusion) == "default") {
        if (m.dual() && c.train.variant.name != objective::Variant::conv_labeled) {
            models::validate(*m.transformer);
            models::validate(*m.conv);
            m.fusion = models::default_fusion_points(*m.transformer, *m.conv);
        }
    } else {
        m.fusion = parse_fusion_points(s.fusion);
    }
    m.upsample = s.upsample;
    m.order = s.order;
    m.check_finite = s.check_finite;
    return m;
}

/// Selects a method variant and the stream layout it needs.
inline void apply_variant(ExperimentConfig& c, objective::Variant v) {
    const auto smoothing = c.train.variant.label_smoothing;
    c.train.variant = objective::MethodVariant::make(v);
    c.train.variant.label_smoothing = smoothing;
    auto& m = c.model;
    switch (v) {
        case objective::Variant::sup_only: break;
        case objective::Variant::vanilla_cnn:
            m.transformer = false;
            m.conv = true;
            m.fusion = "none";
            break;
        case objective::Variant::vanilla_vit:
            m.transformer = true;
            m.conv = false;
            m.fusion = "none";
            break;
        case objective::Variant::conv_labeled:
            m.transformer = m.conv = true;
            m.fusion = "none";
            break;
        case objective::Variant::semiformer:
            m.transformer = m.conv = true;
            if (detail::trim(m.fusion) == "none") m.fusion = "default";
            break;
    }
}

/// Validates everything a run needs and expands defaults, so the result is
/// the exact config a run executes.
inline ExperimentConfig resolve(const ExperimentConfig& c) {
    auto r = c;
    const auto model = model_config(r);
    models::validate(model);
    train::validate(r.train);
    objective::validate_variant(r.train.variant, model);
    r.model.fusion = format_fusion_points(model.fusion);
    const auto info = data::dataset_info(r.data.split.dataset_id);
    if (r.data.mean.empty()) r.data.mean = info.mean;
    if (r.data.stddev.empty()) r.data.stddev = info.stddev;
    if (r.data.mean.size() != static_cast<std::size_t>(info.channels) ||
        r.data.stddev.size() != static_cast<std::size_t>(info.channels))
        throw ConfigError("mean/stddev need one value per channel");
    if (!(r.data.split.label_fraction > 0.0 && r.data.split.label_fraction <= 1.0))
        throw ConfigError("label_fraction must lie in (0, 1]");
    return r;
}

}  // namespace semiformer::experiment
