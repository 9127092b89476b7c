#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <string>

#include "semiformer/errors.hpp"

namespace semiformer::objective {

inline constexpr double kProbEpsilon = 1e-12;
inline constexpr double kNormalizationTolerance = 1e-5;

/// -sum_k target_k * log(max(probs_k, eps)) over the last dimension.
/// `probs` rows must sum to 1 within 1e-5.
inline torch::Tensor cross_entropy(const torch::Tensor& target, const torch::Tensor& probs) {
    if (target.sizes() != probs.sizes()) throw ContractError("cross_entropy: target/probs shape mismatch");
    const auto deviation = (probs.sum(-1) - 1.0).abs().max().item<double>();
    if (!(deviation <= kNormalizationTolerance))
        throw ContractError("cross_entropy: probabilities not normalized (|sum - 1| = " + std::to_string(deviation) + ")");
    return -(target * probs.clamp(kProbEpsilon, 1.0).log()).sum(-1);
}

/// Same quantity from logits, per row: log-softmax clamped at log(eps), so
/// values match `cross_entropy(target, softmax(logits))`.
inline torch::Tensor cross_entropy_logits(const torch::Tensor& target, const torch::Tensor& logits) {
    return -(target * torch::log_softmax(logits, -1).clamp_min(std::log(kProbEpsilon))).sum(-1);
}

/// (1 - s) * one_hot + s / K.
inline torch::Tensor smooth_labels(const torch::Tensor& one_hot, double smoothing) {
    if (smoothing <= 0.0) return one_hot;
    const auto K = static_cast<double>(one_hot.size(-1));
    return one_hot * (1.0 - smoothing) + smoothing / K;
}

/// Per-stream loss terms; terms for a stream the model lacks stay 0.
struct PerStreamLoss {
    double L_l_T = 0.0;
    double L_l_C = 0.0;
    double L_u_T = 0.0;
    double L_u_C = 0.0;
};

struct LossBreakdown {
    double L_l = 0.0;
    double L_u = 0.0;
    double L = 0.0;
    PerStreamLoss per_stream;
    double lambda = 0.0;
    std::int64_t retained_count = 0;
    bool has_unlabeled = false;  // false in supervised phases: L_u is absent, not zero
    torch::Tensor objective;     // differentiable L, when produced by a training step
};

/// L = L_l + lambda * L_u.
inline LossBreakdown total_loss(double L_l, double L_u, double lambda) {
    if (!(lambda >= 0.0)) throw ContractError("lambda must be >= 0");
    LossBreakdown b;
    b.L_l = L_l;
    b.L_u = L_u;
    b.lambda = lambda;
    b.has_unlabeled = true;
    b.L = L_l + lambda * L_u;
    return b;
}

}  // namespace semiformer::objective
