#pragma once
// Single-file checkpoint archive:
//   schema_version            int64
//   model/...                 named parameters and buffers
//   optimizer/...             AdamW state
//   rng/torch                 default CPU generator state
//   run/{epoch,global_step,best_metric}
//   config                    resolved experiment config text

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>

#include "semiformer/errors.hpp"
#include "semiformer/models/dual_stream.hpp"

namespace semiformer::train {

inline constexpr std::int64_t kCheckpointSchema = 1;

struct RunState {
    int epoch = -1;  // last completed epoch
    std::int64_t global_step = 0;
    double best_metric = 0.0;
    std::string config_snapshot;
};

inline void save_checkpoint(const std::filesystem::path& path, models::DualStreamModel& model,
                            torch::optim::Optimizer& optimizer, const RunState& state) {
    torch::serialize::OutputArchive archive;
    archive.write("schema_version", torch::tensor(kCheckpointSchema));
    torch::serialize::OutputArchive model_archive;
    model->save(model_archive);
    archive.write("model", model_archive);
    torch::serialize::OutputArchive optim_archive;
    optimizer.save(optim_archive);
    archive.write("optimizer", optim_archive);
    archive.write("rng/torch", at::detail::getDefaultCPUGenerator().get_state());
    archive.write("run/epoch", torch::tensor(static_cast<std::int64_t>(state.epoch)));
    archive.write("run/global_step", torch::tensor(state.global_step));
    archive.write("run/best_metric", torch::tensor(state.best_metric, torch::kFloat64));
    archive.write("config", c10::IValue(state.config_snapshot));
    const auto tmp = path.string() + ".tmp";
    archive.save_to(tmp);
    std::filesystem::rename(tmp, path);
}

/// Restores model, optimizer and RNG; returns the run state. The model and
/// optimizer must be built from the same config as the saved ones.
inline RunState load_checkpoint(const std::filesystem::path& path, models::DualStreamModel& model,
                                torch::optim::Optimizer& optimizer) {
    if (!std::filesystem::exists(path)) throw Error("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw Error("unreadable checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    torch::Tensor schema;
    archive.read("schema_version", schema);
    if (schema.item<std::int64_t>() != kCheckpointSchema)
        throw Error("checkpoint schema " + std::to_string(schema.item<std::int64_t>()) + " not supported");
    torch::serialize::InputArchive model_archive;
    archive.read("model", model_archive);
    model->load(model_archive);
    torch::serialize::InputArchive optim_archive;
    archive.read("optimizer", optim_archive);
    optimizer.load(optim_archive);
    torch::Tensor rng;
    archive.read("rng/torch", rng);
    auto gen = at::detail::getDefaultCPUGenerator();
    gen.set_state(rng);

    RunState s;
    torch::Tensor epoch, step, best;  // read() into a defined tensor keeps its dtype
    archive.read("run/epoch", epoch);
    s.epoch = static_cast<int>(epoch.item<std::int64_t>());
    archive.read("run/global_step", step);
    s.global_step = step.item<std::int64_t>();
    archive.read("run/best_metric", best);
    s.best_metric = best.item<double>();
    c10::IValue cfg;
    archive.read("config", cfg);
    s.config_snapshot = cfg.toStringRef();
    return s;
}

/// Reads only the embedded config text (to rebuild the model before loading).
inline std::string checkpoint_config(const std::filesystem::path& path) {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    c10::IValue cfg;
    archive.read("config", cfg);
    return cfg.toStringRef();
}

/// Loads only the model weights (evaluation use).
inline void load_model_weights(const std::filesystem::path& path, models::DualStreamModel& model) {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    torch::serialize::InputArchive model_archive;
    archive.read("model", model_archive);
    model->load(model_archive);
}

}  // namespace semiformer::train
