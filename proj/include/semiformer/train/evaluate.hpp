#pragma once

#include <torch/torch.h>

#include <optional>
#include <vector>

#include "semiformer/data/augment.hpp"
#include "semiformer/data/dataset.hpp"
#include "semiformer/errors.hpp"
#include "semiformer/models/dual_stream.hpp"

namespace semiformer::train {

/// Top-1 accuracies in percent. A stream the model lacks is nullopt.
struct EvalResult {
    std::optional<double> top1_T;
    std::optional<double> top1_C;
    double top1_combined = 0.0;
    std::int64_t count = 0;
};

/// Generic evaluation over `count` examples. `predict(begin, end)` returns the
/// logits for that index range; `label(i)` the true class.
template <class Predict, class Label>
EvalResult evaluate_with(std::int64_t count, std::int64_t batch_size, Predict&& predict, Label&& label) {
    if (count <= 0) throw ContractError("evaluate on an empty eval set");
    std::int64_t hit_T = 0, hit_C = 0, hit_comb = 0;
    bool saw_T = false, saw_C = false;
    for (std::int64_t begin = 0; begin < count; begin += batch_size) {
        const auto end = std::min(count, begin + batch_size);
        const models::DualLogits d = predict(begin, end);
        std::vector<std::int64_t> truth;
        for (auto i = begin; i < end; ++i) truth.push_back(label(i));
        const auto y = torch::tensor(truth, torch::kInt64);
        if (d.has_transformer()) {
            saw_T = true;
            hit_T += d.z_T.argmax(1).eq(y).sum().item<std::int64_t>();
        }
        if (d.has_conv()) {
            saw_C = true;
            hit_C += d.z_C.argmax(1).eq(y).sum().item<std::int64_t>();
        }
        hit_comb += models::combined_predict(d).argmax(1).eq(y).sum().item<std::int64_t>();
    }
    const double n = static_cast<double>(count);
    EvalResult r;
    r.count = count;
    if (saw_T) r.top1_T = 100.0 * static_cast<double>(hit_T) / n;
    if (saw_C) r.top1_C = 100.0 * static_cast<double>(hit_C) / n;
    r.top1_combined = 100.0 * static_cast<double>(hit_comb) / n;
    return r;
}

/// Deterministic evaluation: no augmentation, normalized inputs, eval-mode
/// normalization layers. The model's train/eval mode is restored.
inline EvalResult evaluate(models::DualStreamModel& model, const data::Dataset& eval_set,
                           const std::vector<double>& mean, const std::vector<double>& stddev,
                           std::int64_t batch_size = 256) {
    const bool was_training = model->is_training();
    torch::NoGradGuard no_grad;
    model->eval();
    using torch::indexing::Slice;
    auto r = evaluate_with(
        eval_set.size(), batch_size,
        [&](std::int64_t b, std::int64_t e) {
            auto x = eval_set.images.index({Slice(b, e)}).to(torch::kFloat32).div(255.0f);
            return model->forward(data::normalize(x, mean, stddev));
        },
        [&](std::int64_t i) { return static_cast<std::int64_t>(eval_set.labels[static_cast<std::size_t>(i)]); });
    model->train(was_training);
    return r;
}

}  // namespace semiformer::train
