#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "semiformer/errors.hpp"
#include "semiformer/models/config.hpp"
#include "semiformer/models/fusion.hpp"
#include "semiformer/models/streams.hpp"

namespace semiformer::models {

/// Per-stream logits, (n, K) each. A stream the model does not have is left
/// undefined.
struct DualLogits {
    torch::Tensor z_T;
    torch::Tensor z_C;

    bool has_transformer() const { return z_T.defined(); }
    bool has_conv() const { return z_C.defined(); }
};

enum class Mode { train, eval };

/// Transformer stream + conv stream + fusion units. Either stream may be
/// absent (single-architecture baselines); fusion needs both.
struct DualStreamModelImpl : torch::nn::Module {
    explicit DualStreamModelImpl(ModelConfig c) : config(std::move(c)) {
        validate(config);
        if (config.transformer) transformer = register_module("transformer", TransformerStream(*config.transformer));
        if (config.conv) conv = register_module("conv", ConvStream(*config.conv));
        fusion = register_module("fusion", torch::nn::ModuleList());
        for (const auto& fp : config.fusion) {
            const int conv_dim = config.conv->stage_channels[static_cast<std::size_t>(fp.conv_stage_index)];
            fusion->push_back(FusionUnit(config.transformer->embed_dim, conv_dim, config.transformer->grid(),
                                         config.upsample, config.order));
        }
    }

    FusionUnitImpl& fusion_unit(std::size_t i) { return *fusion[i]->as<FusionUnitImpl>(); }

    void zero_init_fusion() {
        for (std::size_t i = 0; i < fusion->size(); ++i) fusion_unit(i).zero_init();
    }

    /// Both streams in lockstep. At each fusion point the transformer has run
    /// blocks [0, b] and the conv stream stages [0, s].
    DualLogits forward(const torch::Tensor& x) {
        if (x.dim() != 4) throw ContractError("forward expects (n, C, H, W)");
        DualLogits out;
        torch::Tensor tokens, fmap;
        std::size_t next_block = 0, next_stage = 0;
        if (transformer) tokens = transformer->embed(x);
        if (conv) fmap = conv->run_stem(x);

        auto advance_transformer = [&](std::size_t until) {
            for (; next_block < until; ++next_block) {
                tokens = transformer->run_block(next_block, tokens);
                if (config.check_finite) check_finite(tokens, "transformer.blocks." + std::to_string(next_block));
            }
        };
        auto advance_conv = [&](std::size_t until) {
            for (; next_stage < until; ++next_stage) {
                fmap = conv->run_stage(next_stage, fmap);
                if (config.check_finite) check_finite(fmap, "conv.stages." + std::to_string(next_stage));
            }
        };

        for (std::size_t i = 0; i < config.fusion.size(); ++i) {
            const auto& fp = config.fusion[i];
            advance_transformer(static_cast<std::size_t>(fp.transformer_block_index) + 1);
            advance_conv(static_cast<std::size_t>(fp.conv_stage_index) + 1);
            std::tie(tokens, fmap) = fusion[i]->as<FusionUnitImpl>()->forward(tokens, fmap);
            if (config.check_finite) {
                check_finite(tokens, "fusion." + std::to_string(i) + ".c2t");
                check_finite(fmap, "fusion." + std::to_string(i) + ".t2c");
            }
        }
        if (transformer) {
            advance_transformer(transformer->blocks->size());
            out.z_T = transformer->logits(tokens);
            if (config.check_finite) check_finite(out.z_T, "transformer.head");
        }
        if (conv) {
            advance_conv(conv->stages->size());
            out.z_C = conv->logits(fmap);
            if (config.check_finite) check_finite(out.z_C, "conv.head");
        }
        return out;
    }

    ModelConfig config;
    TransformerStream transformer{nullptr};
    ConvStream conv{nullptr};
    torch::nn::ModuleList fusion{nullptr};
};
TORCH_MODULE(DualStreamModel);

/// Sets train/eval mode, then runs the dual forward pass.
inline DualLogits forward_dual(DualStreamModel& model, const torch::Tensor& images, Mode mode) {
    model->train(mode == Mode::train);
    return model->forward(images);
}

/// Class probabilities of whichever streams exist, averaged.
/// Two streams: (softmax(z_T) + softmax(z_C)) / 2.
inline torch::Tensor combined_predict(const DualLogits& d) {
    if (d.has_transformer() && d.has_conv())
        return 0.5 * (torch::softmax(d.z_T, -1) + torch::softmax(d.z_C, -1));
    if (d.has_transformer()) return torch::softmax(d.z_T, -1);
    if (d.has_conv()) return torch::softmax(d.z_C, -1);
    throw ContractError("combined_predict on empty logits");
}

inline std::int64_t parameter_count(torch::nn::Module& m) {
    std::int64_t n = 0;
    for (const auto& p : m.parameters()) n += p.numel();
    return n;
}

}  // namespace semiformer::models
