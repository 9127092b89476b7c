#pragma once
// One experiment run from a resolved config. Run directory layout:
//   config.ini         exact resolved config, written before the first step
//   split.json         the partition used
//   metrics.jsonl      metric stream
//   checkpoints/       latest.pt (+ epoch_K.pt)
//   .lock              held while a process owns the directory

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <ostream>
#include <string>

#include "semiformer/data/dataset.hpp"
#include "semiformer/data/split.hpp"
#include "semiformer/errors.hpp"
#include "semiformer/experiment/config.hpp"
#include "semiformer/train/trainer.hpp"

namespace semiformer::experiment {

/// Exclusive ownership of a run directory via an O_EXCL lock file.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
        std::filesystem::create_directories(dir);
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0)
            throw Error("run directory " + dir.string() + " is locked by another process (remove " + path_.string() +
                        " if it is stale)");
        const auto pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;
    ~RunLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }

private:
    std::filesystem::path path_;
};

struct Prepared {
    data::Dataset train_set;
    data::Dataset eval_set;
    data::DatasetSplit split;
    models::ModelConfig model;
};

inline std::filesystem::path data_root(const ExperimentConfig& c) {
    return c.data.data_dir.empty() ? data::default_data_dir() : std::filesystem::path(c.data.data_dir);
}

inline data::DatasetPair load_data(const ExperimentConfig& c) {
    const auto& id = c.data.split.dataset_id;
    const auto root = data_root(c);
    if (id == "cifar10" && !data::cifar10_available(root))
        throw Error("CIFAR-10 binary archives not found under " + root.string() +
                    " (set SEMIFORMER_DATA_DIR or data.data_dir)");
    auto pair = data::load_dataset(id, root, c.data.synthetic);
    pair.train = data::balanced_subset(pair.train, c.data.train_subset);
    pair.test = data::balanced_subset(pair.test, c.data.eval_subset);
    return pair;
}

/// Loads data, builds or reads the split and the model config.
inline Prepared prepare(const ExperimentConfig& resolved) {
    auto pair = load_data(resolved);
    Prepared p;
    if (!resolved.data.split_file.empty()) {
        p.split = data::load_split(resolved.data.split_file);
        if (p.split.spec.dataset_id != resolved.data.split.dataset_id)
            throw ConfigError("split file is for dataset " + p.split.spec.dataset_id + ", config uses " +
                              resolved.data.split.dataset_id);
        for (auto i : p.split.labeled_indices)
            if (i < 0 || i >= pair.train.size())
                throw ConfigError("split file index " + std::to_string(i) + " outside the training set");
        data::attach_hidden_labels(p.split, pair.train.labels);
    } else {
        p.split = data::make_split(resolved.data.split, pair.train.labels);
    }
    p.train_set = std::move(pair.train);
    p.eval_set = std::move(pair.test);
    p.model = model_config(resolved);
    return p;
}

struct RunOptions {
    std::ostream* progress = nullptr;
    bool resume = false;  // continue from checkpoints/latest.pt when present
    std::function<void(std::int64_t, bool, models::DualStreamModel&)> after_backward;
};

/// Runs `config` (resolved first) into its output directory.
inline train::TrainResult run(const ExperimentConfig& config, const RunOptions& opt = {}) {
    const auto resolved = resolve(config);
    const std::filesystem::path dir = resolved.output_dir;
    RunLock lock(dir);
    const auto text = serialize(resolved);
    const auto latest = dir / "checkpoints" / "latest.pt";
    const bool resuming = opt.resume && std::filesystem::exists(latest);
    if (resuming && std::filesystem::exists(dir / "config.ini")) {
        if (serialize(load_config(dir / "config.ini")) != text)
            throw ConfigError("resume config differs from " + (dir / "config.ini").string());
    }
    save_config(dir / "config.ini", resolved);

    auto prepared = prepare(resolved);
    data::save_split(prepared.split, dir / "split.json");

    train::TrainInputs in;
    in.train_set = &prepared.train_set;
    in.eval_set = &prepared.eval_set;
    in.split = &prepared.split;
    in.model = prepared.model;
    in.config = resolved.train;
    in.weak = resolved.weak;
    in.strong = resolved.strong;
    in.mean = resolved.data.mean;
    in.stddev = resolved.data.stddev;
    in.run_dir = dir;
    in.config_snapshot = text;
    if (resuming) in.resume_from = latest;
    in.progress = opt.progress;
    in.after_backward = opt.after_backward;
    return train::train(in);
}

}  // namespace semiformer::experiment
