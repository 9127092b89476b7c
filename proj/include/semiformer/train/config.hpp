#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "semiformer/errors.hpp"
#include "semiformer/objective/step.hpp"

namespace semiformer::train {

struct TrainConfig {
    int total_epochs = 100;
    int warmup_epochs = 5;
    int labeled_only_epochs = 25;
    double lr_init = 1e-3;
    double lr_final = 1e-5;
    std::int64_t n_l = 16;
    std::int64_t mu = 5;
    double tau = 0.7;
    double lambda = 4.0;
    std::uint64_t seed = 0;
    bool deterministic = true;
    int eval_every = 1;
    objective::MethodVariant variant = objective::MethodVariant::make(objective::Variant::semiformer);

    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double grad_clip = 1.0;  // global norm; <= 0 disables
    int workers = 1;
    bool keep_all_checkpoints = false;

    int pretrain_epochs() const { return warmup_epochs + labeled_only_epochs; }

    bool operator==(const TrainConfig&) const = default;
};

inline void validate(const TrainConfig& c) {
    if (c.total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
    if (c.warmup_epochs < 0 || c.labeled_only_epochs < 0) throw ConfigError("phase lengths must be >= 0");
    if (c.pretrain_epochs() > c.total_epochs)
        throw ConfigError("warmup_epochs + labeled_only_epochs exceeds total_epochs");
    if (!(c.lr_init > 0.0) || !(c.lr_final >= 0.0) || c.lr_final > c.lr_init)
        throw ConfigError("need 0 <= lr_final <= lr_init, lr_init > 0");
    if (c.n_l < 1) throw ConfigError("n_l must be >= 1");
    if (c.mu < 1 && c.variant.uses_unlabeled()) throw ConfigError("mu must be >= 1");
    if (!(c.tau > 0.0 && c.tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
    if (!(c.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (c.eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

/// Linear warmup from 0 to lr_init over the warmup steps, then cosine decay
/// that reaches lr_final on the last step of the run.
class LrSchedule {
public:
    LrSchedule(const TrainConfig& c, std::int64_t steps_per_epoch)
        : lr_init_(c.lr_init),
          lr_final_(c.lr_final),
          warmup_(static_cast<std::int64_t>(c.warmup_epochs) * steps_per_epoch),
          total_(static_cast<std::int64_t>(c.total_epochs) * steps_per_epoch) {}

    double operator()(std::int64_t step) const {
        if (step < warmup_) return lr_init_ * static_cast<double>(step) / static_cast<double>(warmup_);
        const auto span = std::max<std::int64_t>(1, total_ - 1 - warmup_);
        const double t = static_cast<double>(std::min(step - warmup_, span)) / static_cast<double>(span);
        return lr_final_ + 0.5 * (lr_init_ - lr_final_) * (1.0 + std::cos(std::numbers::pi * t));
    }

    std::int64_t warmup_steps() const { return warmup_; }
    std::int64_t total_steps() const { return total_; }

private:
    double lr_init_, lr_final_;
    std::int64_t warmup_, total_;
};

inline double lr_at(std::int64_t step, const TrainConfig& c, std::int64_t steps_per_epoch) {
    return LrSchedule(c, steps_per_epoch)(step);
}

}  // namespace semiformer::train
