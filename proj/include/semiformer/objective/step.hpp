#pragma once
// Per-step objective for every method variant:
//
//   L_l = mean_i [CE(y_i, f_T(g+(x_i))) + CE(y_i, f_C(g+(x_i)))]
//   L_u = (1/n_u) sum_j [CE(yhat_j, f_T(g+(u_j))) + CE(yhat_j, f_C(g+(u_j)))] * delta_j
//   L   = L_l + lambda * L_u
//
// with yhat_j, delta_j from the teacher's weak-view probabilities.

#include <torch/torch.h>

#include <optional>
#include <string>

#include "semiformer/data/batch.hpp"
#include "semiformer/errors.hpp"
#include "semiformer/models/dual_stream.hpp"
#include "semiformer/objective/losses.hpp"
#include "semiformer/objective/pseudo_label.hpp"

namespace semiformer::objective {

enum class Variant { sup_only, vanilla_cnn, vanilla_vit, conv_labeled, semiformer };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::sup_only: return "sup";
        case Variant::vanilla_cnn: return "vanilla-cnn";
        case Variant::vanilla_vit: return "vanilla-vit";
        case Variant::conv_labeled: return "conv-labeled";
        case Variant::semiformer: return "semiformer";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "sup" || s == "sup_only") return Variant::sup_only;
    if (s == "vanilla-cnn" || s == "vanilla_cnn") return Variant::vanilla_cnn;
    if (s == "vanilla-vit" || s == "vanilla_vit") return Variant::vanilla_vit;
    if (s == "conv-labeled" || s == "conv_labeled") return Variant::conv_labeled;
    if (s == "semiformer") return Variant::semiformer;
    throw ConfigError("unknown variant '" + s + "' (sup|vanilla-cnn|vanilla-vit|conv-labeled|semiformer)");
}

struct MethodVariant {
    Variant name = Variant::semiformer;
    PseudoSource pseudo_source = PseudoSource::cnn;
    double label_smoothing = 0.0;  // on ground-truth labels only

    static MethodVariant make(Variant v) {
        MethodVariant m;
        m.name = v;
        m.pseudo_source = v == Variant::vanilla_vit ? PseudoSource::transformer : PseudoSource::cnn;
        return m;
    }

    bool uses_unlabeled() const { return name != Variant::sup_only; }
    bool operator==(const MethodVariant&) const = default;
};

/// Rejects variant / model combinations that do not describe the method.
inline void validate_variant(const MethodVariant& v, const models::ModelConfig& m) {
    const std::string name = to_string(v.name);
    switch (v.name) {
        case Variant::sup_only: break;
        case Variant::vanilla_cnn:
            if (m.transformer || !m.conv) throw ConfigError(name + " needs a conv-only model");
            if (v.pseudo_source != PseudoSource::cnn) throw ConfigError(name + " is its own teacher (pseudo source cnn)");
            break;
        case Variant::vanilla_vit:
            if (m.conv || !m.transformer) throw ConfigError(name + " needs a transformer-only model");
            if (v.pseudo_source != PseudoSource::transformer)
                throw ConfigError(name + " is its own teacher (pseudo source transformer)");
            break;
        case Variant::conv_labeled:
            if (!m.dual()) throw ConfigError(name + " needs both streams");
            if (!m.fusion.empty()) throw ConfigError(name + " trains decoupled streams; remove the fusion points");
            break;
        case Variant::semiformer:
            if (!m.dual()) throw ConfigError(name + " needs both streams");
            break;
    }
    if (v.uses_unlabeled()) {
        if (v.pseudo_source == PseudoSource::cnn && !m.conv) throw ConfigError("pseudo source cnn needs a conv stream");
        if (v.pseudo_source == PseudoSource::transformer && !m.transformer)
            throw ConfigError("pseudo source transformer needs a transformer stream");
        if (v.pseudo_source == PseudoSource::fused_average && !m.dual())
            throw ConfigError("pseudo source fused needs both streams");
    }
    if (v.label_smoothing < 0.0 || v.label_smoothing >= 1.0) throw ConfigError("label_smoothing must lie in [0, 1)");
}

/// Differentiable loss with its per-stream parts (undefined when the stream
/// is absent).
struct StreamLoss {
    torch::Tensor total;
    torch::Tensor T;
    torch::Tensor C;
};

/// Mean over the batch of the per-stream cross-entropies against `targets`.
inline StreamLoss labeled_loss(const models::DualLogits& logits, const torch::Tensor& targets) {
    if (targets.size(0) == 0) throw ContractError("labeled_loss on an empty labeled batch");
    StreamLoss s;
    if (logits.has_transformer()) s.T = cross_entropy_logits(targets, logits.z_T).mean();
    if (logits.has_conv()) s.C = cross_entropy_logits(targets, logits.z_C).mean();
    s.total = s.T.defined() && s.C.defined() ? s.T + s.C : s.T.defined() ? s.T : s.C;
    return s;
}

/// Forward on the labeled strong views with the model in its current mode.
inline StreamLoss labeled_loss(const data::MixedBatch& batch, models::DualStreamModel& model,
                               double label_smoothing = 0.0) {
    if (batch.n_l() == 0) throw ContractError("labeled_loss on an empty labeled batch");
    return labeled_loss(model->forward(batch.labeled_images_strong), smooth_labels(batch.labels, label_smoothing));
}

/// Masked sum of per-stream cross-entropies against the pseudo labels,
/// divided by n_u. A fully masked batch gives exactly 0 with zero gradient.
inline StreamLoss unlabeled_loss(const models::DualLogits& strong_logits, const PseudoLabelResult& plr) {
    StreamLoss s;
    const auto n_u = plr.hard_labels.size(0);
    if (n_u == 0) throw ContractError("unlabeled_loss on an empty unlabeled batch");
    const auto weight = plr.mask.to(plr.hard_labels.scalar_type());
    auto term = [&](const torch::Tensor& z) {
        const auto w = weight.to(z.scalar_type());
        return (cross_entropy_logits(plr.hard_labels.to(z.scalar_type()), z) * w).sum() / static_cast<double>(n_u);
    };
    if (strong_logits.has_transformer()) s.T = term(strong_logits.z_T);
    if (strong_logits.has_conv()) s.C = term(strong_logits.z_C);
    s.total = s.T.defined() && s.C.defined() ? s.T + s.C : s.T.defined() ? s.T : s.C;
    return s;
}

/// Forward on the unlabeled strong views with the model in its current mode.
inline StreamLoss unlabeled_loss(const data::MixedBatch& batch, const PseudoLabelResult& plr,
                                 models::DualStreamModel& model) {
    return unlabeled_loss(model->forward(batch.unlabeled_images_strong), plr);
}

struct StepResult {
    LossBreakdown breakdown;
    std::optional<PseudoLabelResult> pseudo;
};

namespace detail {

inline double value(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

inline models::DualLogits slice(const models::DualLogits& d, std::int64_t begin, std::int64_t end) {
    using torch::indexing::Slice;
    models::DualLogits out;
    if (d.has_transformer()) out.z_T = d.z_T.index({Slice(begin, end)});
    if (d.has_conv()) out.z_C = d.z_C.index({Slice(begin, end)});
    return out;
}

}  // namespace detail

/// One training step's loss. `supervised_phase` (or the sup_only variant)
/// skips the teacher pass and leaves L_u absent. Otherwise the teacher runs
/// on the weak views, then a single train-mode forward covers the labeled
/// and unlabeled strong views.
inline StepResult step_objective(const data::MixedBatch& batch, models::DualStreamModel& model,
                                 const MethodVariant& variant, double tau, double lambda,
                                 bool supervised_phase = false) {
    validate_variant(variant, model->config);
    if (!(lambda >= 0.0)) throw ContractError("lambda must be >= 0");
    const auto targets = smooth_labels(batch.labels, variant.label_smoothing);
    StepResult r;
    auto& b = r.breakdown;
    b.lambda = lambda;

    if (supervised_phase || !variant.uses_unlabeled() || batch.n_u() == 0) {
        model->train();
        const auto l = labeled_loss(model->forward(batch.labeled_images_strong), targets);
        b.L_l = detail::value(l.total);
        b.per_stream.L_l_T = detail::value(l.T);
        b.per_stream.L_l_C = detail::value(l.C);
        b.L = b.L_l;
        b.objective = l.total;
        return r;
    }

    r.pseudo = generate_pseudo_labels(batch.unlabeled_images_weak, model, variant.pseudo_source, tau);
    model->train();
    const auto n_l = batch.n_l();
    const auto logits = model->forward(torch::cat({batch.labeled_images_strong, batch.unlabeled_images_strong}, 0));
    const auto l = labeled_loss(detail::slice(logits, 0, n_l), targets);
    const auto u = unlabeled_loss(detail::slice(logits, n_l, n_l + batch.n_u()), *r.pseudo);
    b.has_unlabeled = true;
    b.L_l = detail::value(l.total);
    b.L_u = detail::value(u.total);
    b.per_stream = {detail::value(l.T), detail::value(l.C), detail::value(u.T), detail::value(u.C)};
    b.retained_count = r.pseudo->retained_count;
    b.objective = l.total + lambda * u.total;
    b.L = b.L_l + lambda * b.L_u;
    return r;
}

}  // namespace semiformer::objective
