#pragma once

#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "semiformer/data/batch.hpp"
#include "semiformer/data/dataset.hpp"
#include "semiformer/data/split.hpp"
#include "semiformer/errors.hpp"
#include "semiformer/models/dual_stream.hpp"
#include "semiformer/objective/step.hpp"
#include "semiformer/train/checkpoint.hpp"
#include "semiformer/train/config.hpp"
#include "semiformer/train/evaluate.hpp"
#include "semiformer/train/metrics.hpp"

namespace semiformer::train {

/// Raised when a step produces a non-finite loss. The abort record has
/// already been written to the metric stream.
class TrainingAborted : public NumericalError {
public:
    TrainingAborted(std::string where, std::string what, nlohmann::json diagnostic)
        : NumericalError(std::move(where), std::move(what)), diagnostic_(std::move(diagnostic)) {}
    const nlohmann::json& diagnostic() const { return diagnostic_; }

private:
    nlohmann::json diagnostic_;
};

struct TrainInputs {
    const data::Dataset* train_set = nullptr;
    const data::Dataset* eval_set = nullptr;
    const data::DatasetSplit* split = nullptr;
    models::ModelConfig model;
    TrainConfig config;
    data::WeakParams weak{};
    data::StrongParams strong{};
    std::vector<double> mean;    // empty: dataset defaults
    std::vector<double> stddev;  // empty: dataset defaults
    std::filesystem::path run_dir;  // empty: nothing written
    std::string config_snapshot;
    std::filesystem::path resume_from;  // empty: fresh run
    std::ostream* progress = nullptr;
    /// Test hook, called after backward and before the optimizer step.
    std::function<void(std::int64_t step, bool supervised_phase, models::DualStreamModel&)> after_backward;
};

struct TrainResult {
    RunState state;
    models::DualStreamModel model{nullptr};
    std::vector<MetricRecord> records;  // records produced by this invocation
    std::vector<nlohmann::json> loss_lines;
};

namespace detail {

inline void set_lr(torch::optim::Optimizer& opt, double lr) {
    for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
}

inline std::string fmt(const std::optional<double>& v, int precision = 4) {
    if (!v) return "-";
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << *v;
    return s.str();
}

}  // namespace detail

/// Runs the schedule: epochs [0, warmup + labeled_only) train on labeled data
/// only, later epochs use the full objective of the configured variant.
/// Evaluates every `eval_every` epochs and at the end; checkpoints at every
/// evaluation.
inline TrainResult train(const TrainInputs& in) {
    if (!in.train_set || !in.eval_set || !in.split) throw ContractError("train: missing dataset or split");
    const auto& cfg = in.config;
    validate(cfg);
    models::validate(in.model);
    objective::validate_variant(cfg.variant, in.model);
    if (cfg.variant.uses_unlabeled() && cfg.pretrain_epochs() < cfg.total_epochs && in.split->unlabeled_indices.empty())
        throw ConfigError("variant " + objective::to_string(cfg.variant.name) + " needs unlabeled data");

    if (cfg.deterministic) {
        at::set_num_threads(1);
        at::globalContext().setDeterministicAlgorithms(true, false);
    }
    torch::manual_seed(cfg.seed);

    TrainResult result;
    result.model = models::DualStreamModel(in.model);
    auto& model = result.model;
    torch::optim::AdamW optimizer(model->parameters(), torch::optim::AdamWOptions(cfg.lr_init)
                                                           .betas({cfg.beta1, cfg.beta2})
                                                           .weight_decay(cfg.weight_decay));

    data::ComposeOptions copt;
    copt.n_l = cfg.n_l;
    copt.mu = cfg.variant.uses_unlabeled() ? cfg.mu : 0;
    copt.weak = in.weak;
    copt.strong = in.strong;
    copt.mean = in.mean.empty() ? in.train_set->info.mean : in.mean;
    copt.stddev = in.stddev.empty() ? in.train_set->info.stddev : in.stddev;
    copt.seed = derive_seed(cfg.seed, {0xba7c4ULL});
    copt.workers = cfg.workers;
    const data::BatchComposer composer(*in.train_set, *in.split, copt);
    const auto steps_per_epoch = composer.steps_per_epoch();
    const LrSchedule schedule(cfg, steps_per_epoch);

    RunState& state = result.state;
    state.config_snapshot = in.config_snapshot;
    if (!in.resume_from.empty()) {
        state = load_checkpoint(in.resume_from, model, optimizer);
        state.config_snapshot = in.config_snapshot;
    }

    MetricsWriter writer;
    std::filesystem::path ckpt_dir;
    if (!in.run_dir.empty()) {
        std::filesystem::create_directories(in.run_dir);
        writer = MetricsWriter(in.run_dir / "metrics.jsonl", /*append=*/!in.resume_from.empty());
        ckpt_dir = in.run_dir / "checkpoints";
        std::filesystem::create_directories(ckpt_dir);
    }

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    model->train();
    for (int epoch = state.epoch + 1; epoch < cfg.total_epochs; ++epoch) {
        const bool supervised = epoch < cfg.pretrain_epochs() || !cfg.variant.uses_unlabeled();
        double sum_L = 0, sum_Ll = 0, sum_Lu = 0, sum_cov = 0;
        std::int64_t retained = 0, pl_correct = 0;
        double lr = 0.0;

        for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
            const auto step = state.global_step;
            lr = schedule(step);
            detail::set_lr(optimizer, lr);
            const auto batch = composer.compose(step, !supervised);
            if (in.progress && batch.unlabeled_wrapped)
                *in.progress << "step " << step << ": unlabeled pool wrapped, re-shuffled\n";

            auto r = objective::step_objective(batch, model, cfg.variant, cfg.tau, cfg.lambda, supervised);
            const auto& b = r.breakdown;
            if (!std::isfinite(b.L)) {
                nlohmann::json diag = loss_to_json(b, step, epoch, lr);
                diag["record"] = "abort";
                diag["reason"] = "non-finite loss";
                writer.write(diag);
                throw TrainingAborted("loss", "non-finite loss at step " + std::to_string(step), diag);
            }
            optimizer.zero_grad();
            b.objective.backward();
            if (in.after_backward) in.after_backward(step, supervised, model);
            if (cfg.grad_clip > 0.0) torch::nn::utils::clip_grad_norm_(model->parameters(), cfg.grad_clip);
            optimizer.step();

            auto line = loss_to_json(b, step, epoch, lr);
            writer.write(line);
            result.loss_lines.push_back(std::move(line));
            sum_L += b.L;
            sum_Ll += b.L_l;
            if (b.has_unlabeled) sum_Lu += b.L_u;
            if (r.pseudo) {
                sum_cov += r.pseudo->coverage;
                retained += r.pseudo->retained_count;
                if (in.split->has_hidden_labels() && r.pseudo->retained_count > 0) {
                    const auto pred = r.pseudo->hard_labels.argmax(1);
                    const auto mask = r.pseudo->mask;
                    for (std::int64_t j = 0; j < pred.size(0); ++j) {
                        if (!mask[j].item<bool>()) continue;
                        const auto truth = in.split->hidden_label(batch.unlabeled_indices[static_cast<std::size_t>(j)]);
                        if (pred[j].item<std::int64_t>() == truth) ++pl_correct;
                    }
                }
            }
            ++state.global_step;
        }

        MetricRecord rec;
        rec.step = state.global_step;
        rec.epoch = epoch;
        rec.lr = lr;
        const double n = static_cast<double>(steps_per_epoch);
        rec.L = sum_L / n;
        rec.L_l = sum_Ll / n;
        if (!supervised) {
            rec.L_u = sum_Lu / n;
            rec.coverage = sum_cov / n;
            if (retained > 0) rec.pseudo_label_accuracy = 100.0 * static_cast<double>(pl_correct) / static_cast<double>(retained);
        }
        state.epoch = epoch;
        const bool eval_now = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.total_epochs;
        if (eval_now) {
            const auto ev = evaluate(model, *in.eval_set, copt.mean, copt.stddev);
            rec.top1_T = ev.top1_T;
            rec.top1_C = ev.top1_C;
            rec.top1_combined = ev.top1_combined;
            state.best_metric = std::max(state.best_metric, ev.top1_combined);
            if (!ckpt_dir.empty()) {
                save_checkpoint(ckpt_dir / "latest.pt", model, optimizer, state);
                if (cfg.keep_all_checkpoints)
                    std::filesystem::copy_file(ckpt_dir / "latest.pt",
                                               ckpt_dir / ("epoch_" + std::to_string(epoch) + ".pt"),
                                               std::filesystem::copy_options::overwrite_existing);
            }
        }
        rec.wall_time = elapsed();
        writer.write(to_json(rec));
        result.records.push_back(rec);
        if (in.progress) {
            *in.progress << "epoch " << epoch + 1 << "/" << cfg.total_epochs << (supervised ? " [sup]" : " [ssl]")
                         << " lr " << std::scientific << std::setprecision(3) << lr << std::defaultfloat
                         << " L " << detail::fmt(rec.L) << " L_u " << detail::fmt(rec.L_u) << " cov "
                         << detail::fmt(rec.coverage, 3) << " top1 T/C/comb " << detail::fmt(rec.top1_T, 2) << "/"
                         << detail::fmt(rec.top1_C, 2) << "/" << detail::fmt(rec.top1_combined, 2) << " ("
                         << std::fixed << std::setprecision(1) << rec.wall_time << std::defaultfloat << "s)\n";
        }
    }
    return result;
}

}  // namespace semiformer::train
