#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "semiformer/data/dataset.hpp"
#include "semiformer/errors.hpp"
#include "semiformer/rng.hpp"

namespace semiformer::data {

struct SplitSpec {
    std::string dataset_id = "cifar10";
    double label_fraction = 0.1;
    std::uint64_t seed = 1;
    bool stratified = true;

    bool operator==(const SplitSpec&) const = default;
};

/// Labeled/unlabeled partition of a training set. Index lists are sorted.
///
/// Unlabeled ground truth is kept apart from anything a loss can see: the
/// only accessor is `hidden_label`, used by diagnostics (pseudo-label
/// accuracy).
class DatasetSplit {
public:
    SplitSpec spec;
    std::vector<std::int64_t> labeled_indices;
    std::vector<std::int64_t> unlabeled_indices;

    void set_hidden_labels(std::map<std::int64_t, int> labels) { hidden_labels_ = std::move(labels); }
    int hidden_label(std::int64_t index) const { return hidden_labels_.at(index); }
    bool has_hidden_labels() const { return !hidden_labels_.empty() || unlabeled_indices.empty(); }

    bool operator==(const DatasetSplit& o) const {
        return spec == o.spec && labeled_indices == o.labeled_indices && unlabeled_indices == o.unlabeled_indices;
    }

private:
    std::map<std::int64_t, int> hidden_labels_;
};

/// Labeled count for one class under stratification.
inline std::int64_t stratified_count(double fraction, std::int64_t class_size) {
    return std::min<std::int64_t>(class_size, std::llround(fraction * static_cast<double>(class_size)));
}

/// Deterministic partition of `labels` (one entry per training example).
inline DatasetSplit make_split(const SplitSpec& spec, std::span<const int> labels) {
    const auto info = dataset_info(spec.dataset_id);
    if (!(spec.label_fraction > 0.0 && spec.label_fraction <= 1.0))
        throw ConfigError("label_fraction must lie in (0, 1], got " + std::to_string(spec.label_fraction));

    std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(info.num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= info.num_classes)
            throw ContractError("label " + std::to_string(y) + " out of range for " + spec.dataset_id);
        by_class[static_cast<std::size_t>(y)].push_back(static_cast<std::int64_t>(i));
    }
    for (int c = 0; c < info.num_classes; ++c)
        if (by_class[static_cast<std::size_t>(c)].empty())
            throw SplitError("class " + std::to_string(c) + " has no examples", c);

    std::vector<char> is_labeled(labels.size(), 0);
    if (spec.stratified) {
        for (int c = 0; c < info.num_classes; ++c) {
            auto members = by_class[static_cast<std::size_t>(c)];
            const auto n = stratified_count(spec.label_fraction, static_cast<std::int64_t>(members.size()));
            if (n == 0)
                throw SplitError("label_fraction " + std::to_string(spec.label_fraction) +
                                     " leaves class " + std::to_string(c) + " without labeled examples",
                                 c);
            Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(c)}));
            shuffle(members, rng);
            for (std::int64_t k = 0; k < n; ++k) is_labeled[static_cast<std::size_t>(members[static_cast<std::size_t>(k)])] = 1;
        }
    } else {
        std::vector<std::int64_t> all(labels.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int64_t>(i);
        const auto n = std::min<std::int64_t>(static_cast<std::int64_t>(all.size()),
                                              std::llround(spec.label_fraction * static_cast<double>(all.size())));
        if (n == 0) throw SplitError("label_fraction leaves no labeled examples", -1);
        Rng rng(derive_seed(spec.seed, {0xa11ULL}));
        shuffle(all, rng);
        for (std::int64_t k = 0; k < n; ++k) is_labeled[static_cast<std::size_t>(all[static_cast<std::size_t>(k)])] = 1;
    }

    DatasetSplit split;
    split.spec = spec;
    std::map<std::int64_t, int> hidden;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto idx = static_cast<std::int64_t>(i);
        if (is_labeled[i]) {
            split.labeled_indices.push_back(idx);
        } else {
            split.unlabeled_indices.push_back(idx);
            hidden[idx] = labels[i];
        }
    }
    split.set_hidden_labels(std::move(hidden));
    return split;
}

inline nlohmann::json to_json(const SplitSpec& s) {
    return {{"dataset_id", s.dataset_id},
            {"label_fraction", s.label_fraction},
            {"seed", s.seed},
            {"stratified", s.stratified}};
}

inline SplitSpec split_spec_from_json(const nlohmann::json& j) {
    SplitSpec s;
    s.dataset_id = j.at("dataset_id").get<std::string>();
    s.label_fraction = j.at("label_fraction").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.stratified = j.at("stratified").get<bool>();
    return s;
}

/// Split file: {spec, labeled_indices, unlabeled_indices}. Hidden labels are
/// not persisted; `attach_hidden_labels` restores them from the dataset.
inline void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
    nlohmann::json j;
    j["spec"] = to_json(split.spec);
    j["labeled_indices"] = split.labeled_indices;
    j["unlabeled_indices"] = split.unlabeled_indices;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write split file " + path.string());
    out << j.dump() << '\n';
}

inline DatasetSplit load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read split file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed split file " + path.string() + ": " + e.what());
    }
    DatasetSplit split;
    split.spec = split_spec_from_json(j.at("spec"));
    split.labeled_indices = j.at("labeled_indices").get<std::vector<std::int64_t>>();
    split.unlabeled_indices = j.at("unlabeled_indices").get<std::vector<std::int64_t>>();
    return split;
}

inline void attach_hidden_labels(DatasetSplit& split, std::span<const int> labels) {
    std::map<std::int64_t, int> hidden;
    for (auto idx : split.unlabeled_indices) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= labels.size())
            throw ContractError("split index " + std::to_string(idx) + " outside dataset");
        hidden[idx] = labels[static_cast<std::size_t>(idx)];
    }
    split.set_hidden_labels(std::move(hidden));
}

}  // namespace semiformer::data
