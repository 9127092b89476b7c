#pragma once

#include <torch/torch.h>

#include <string>

#include "semiformer/errors.hpp"
#include "semiformer/models/dual_stream.hpp"

namespace semiformer::objective {

enum class PseudoSource { cnn, transformer, fused_average };

inline std::string to_string(PseudoSource s) {
    switch (s) {
        case PseudoSource::cnn: return "cnn";
        case PseudoSource::transformer: return "transformer";
        case PseudoSource::fused_average: return "fused";
    }
    return "?";
}

inline PseudoSource parse_pseudo_source(const std::string& s) {
    if (s == "cnn") return PseudoSource::cnn;
    if (s == "transformer" || s == "trans") return PseudoSource::transformer;
    if (s == "fused" || s == "fused_average") return PseudoSource::fused_average;
    throw ConfigError("unknown pseudo-label source '" + s + "' (cnn|transformer|fused)");
}

struct PseudoLabelResult {
    torch::Tensor probs;        // (n_u, K), no autograd history
    torch::Tensor hard_labels;  // (n_u, K) one-hot of argmax
    torch::Tensor mask;         // (n_u,) bool: max_k p_jk >= tau
    double tau = 0.0;
    double coverage = 0.0;
    std::int64_t retained_count = 0;
};

/// Hard labels and confidence mask from teacher probabilities.
inline PseudoLabelResult pseudo_labels_from_probs(const torch::Tensor& probs, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ContractError("tau must lie in (0, 1)");
    if (probs.dim() != 2) throw ContractError("pseudo-label probabilities must be (n_u, K)");
    PseudoLabelResult r;
    r.probs = probs.detach();
    r.tau = tau;
    auto [max_p, arg] = r.probs.max(1);
    r.hard_labels = torch::one_hot(arg, probs.size(1)).to(probs.scalar_type());
    r.mask = max_p >= tau;
    r.retained_count = r.mask.sum().item<std::int64_t>();
    r.coverage = probs.size(0) > 0 ? static_cast<double>(r.retained_count) / static_cast<double>(probs.size(0)) : 0.0;
    return r;
}

/// Teacher probabilities for `source`.
inline torch::Tensor teacher_probs(const models::DualLogits& logits, PseudoSource source) {
    switch (source) {
        case PseudoSource::cnn:
            if (!logits.has_conv()) throw ConfigError("pseudo-label source cnn needs a conv stream");
            return torch::softmax(logits.z_C, -1);
        case PseudoSource::transformer:
            if (!logits.has_transformer()) throw ConfigError("pseudo-label source transformer needs a transformer stream");
            return torch::softmax(logits.z_T, -1);
        case PseudoSource::fused_average:
            if (!logits.has_conv() || !logits.has_transformer())
                throw ConfigError("pseudo-label source fused needs both streams");
            return models::combined_predict(logits);
    }
    throw ConfigError("bad pseudo-label source");
}

/// Teacher pass on the weak views: eval-mode normalization (running
/// statistics), no autograd. The model's train/eval mode is restored.
inline PseudoLabelResult generate_pseudo_labels(const torch::Tensor& unlabeled_weak, models::DualStreamModel& model,
                                                PseudoSource source, double tau) {
    const bool was_training = model->is_training();
    torch::Tensor probs;
    {
        torch::NoGradGuard no_grad;
        model->eval();
        probs = teacher_probs(model->forward(unlabeled_weak), source);
    }
    model->train(was_training);
    return pseudo_labels_from_probs(probs, tau);
}

}  // namespace semiformer::objective
