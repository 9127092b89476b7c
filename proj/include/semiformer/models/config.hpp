#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "semiformer/errors.hpp"

namespace semiformer::models {

struct TransformerStreamConfig {
    int image_size = 32;
    int in_channels = 3;
    int patch_size = 4;
    int embed_dim = 192;
    int depth = 6;
    int heads = 3;
    double mlp_ratio = 4.0;
    int num_classes = 10;

    int grid() const { return image_size / patch_size; }
    int num_patches() const { return grid() * grid(); }

    bool operator==(const TransformerStreamConfig&) const = default;
};

struct ConvStreamConfig {
    int image_size = 32;
    int in_channels = 3;
    std::vector<int> stage_channels{64, 128, 256};
    std::vector<int> stage_depths{1, 1, 1};
    std::vector<int> downsample_factors{1, 2, 2};
    int num_classes = 10;

    /// Spatial side length after stage `s` (inclusive).
    int grid_after(std::size_t s) const {
        int side = image_size;
        for (std::size_t i = 0; i <= s && i < downsample_factors.size(); ++i) side /= downsample_factors[i];
        return side;
    }

    bool operator==(const ConvStreamConfig&) const = default;
};

/// Exchange point: after transformer block `transformer_block_index` and conv
/// stage `conv_stage_index` (both 0-based, inclusive). `align_dim`, when
/// non-zero, must equal the conv channel count at that stage.
struct FusionPoint {
    int transformer_block_index = 0;
    int conv_stage_index = 0;
    int align_dim = 0;

    bool operator==(const FusionPoint&) const = default;
};

enum class UpsampleMode { nearest, bilinear };

/// symmetric: both directions read the pre-fusion features.
/// sequential: conv->tokens first, tokens->conv then reads the updated tokens.
enum class FusionOrder { symmetric, sequential };

struct ModelConfig {
    std::optional<TransformerStreamConfig> transformer = TransformerStreamConfig{};
    std::optional<ConvStreamConfig> conv = ConvStreamConfig{};
    std::vector<FusionPoint> fusion;
    UpsampleMode upsample = UpsampleMode::nearest;
    FusionOrder order = FusionOrder::symmetric;
    bool check_finite = true;

    bool dual() const { return transformer.has_value() && conv.has_value(); }
    int num_classes() const { return transformer ? transformer->num_classes : conv ? conv->num_classes : 0; }

    bool operator==(const ModelConfig&) const = default;
};

inline void validate(const TransformerStreamConfig& c) {
    if (c.patch_size < 1 || c.image_size % c.patch_size != 0)
        throw ConfigError("image side " + std::to_string(c.image_size) + " not divisible by patch_size " +
                          std::to_string(c.patch_size));
    if (c.heads < 1 || c.embed_dim % c.heads != 0)
        throw ConfigError("embed_dim " + std::to_string(c.embed_dim) + " not divisible by heads " +
                          std::to_string(c.heads));
    if (c.depth < 1) throw ConfigError("transformer depth must be >= 1");
    if (c.mlp_ratio <= 0.0) throw ConfigError("mlp_ratio must be positive");
    if (c.num_classes < 2) throw ConfigError("num_classes must be >= 2");
}

inline void validate(const ConvStreamConfig& c) {
    const auto n = c.stage_channels.size();
    if (n == 0) throw ConfigError("conv stream needs at least one stage");
    if (c.stage_depths.size() != n || c.downsample_factors.size() != n)
        throw ConfigError("stage_channels, stage_depths and downsample_factors must have equal length");
    int side = c.image_size;
    for (std::size_t s = 0; s < n; ++s) {
        if (c.stage_channels[s] < 1 || c.stage_depths[s] < 1 || c.downsample_factors[s] < 1)
            throw ConfigError("conv stage " + std::to_string(s) + " has a non-positive setting");
        if (side % c.downsample_factors[s] != 0)
            throw ConfigError("cumulative downsampling at stage " + std::to_string(s) +
                              " does not divide the input resolution");
        side /= c.downsample_factors[s];
    }
    if (c.num_classes < 2) throw ConfigError("num_classes must be >= 2");
}

/// Build-time checks; nothing here is re-checked per step.
inline void validate(const ModelConfig& m) {
    if (!m.transformer && !m.conv) throw ConfigError("model needs at least one stream");
    if (m.transformer) validate(*m.transformer);
    if (m.conv) validate(*m.conv);
    if (m.dual()) {
        if (m.transformer->num_classes != m.conv->num_classes)
            throw ConfigError("streams disagree on num_classes");
        if (m.transformer->image_size != m.conv->image_size || m.transformer->in_channels != m.conv->in_channels)
            throw ConfigError("streams disagree on input shape");
    }
    if (m.fusion.empty()) return;
    if (!m.dual()) throw ConfigError("fusion points need both streams");
    const auto& t = *m.transformer;
    const auto& c = *m.conv;
    const int tokens_side = t.grid();
    for (std::size_t i = 0; i < m.fusion.size(); ++i) {
        const auto& fp = m.fusion[i];
        const std::string where = "fusion point " + std::to_string(i);
        if (fp.transformer_block_index < 0 || fp.transformer_block_index >= t.depth)
            throw ConfigError(where + ": transformer block index out of range");
        if (fp.conv_stage_index < 0 || fp.conv_stage_index >= static_cast<int>(c.stage_channels.size()))
            throw ConfigError(where + ": conv stage index out of range");
        const int conv_side = c.grid_after(static_cast<std::size_t>(fp.conv_stage_index));
        if (conv_side < tokens_side || conv_side % tokens_side != 0)
            throw ConfigError(where + ": conv grid " + std::to_string(conv_side) + "x" + std::to_string(conv_side) +
                              " is not a multiple of the token grid " + std::to_string(tokens_side) + "x" +
                              std::to_string(tokens_side));
        const int channels = c.stage_channels[static_cast<std::size_t>(fp.conv_stage_index)];
        if (fp.align_dim != 0 && fp.align_dim != channels)
            throw ConfigError(where + ": align_dim " + std::to_string(fp.align_dim) + " != conv channels " +
                              std::to_string(channels));
        if (i > 0) {
            const auto& prev = m.fusion[i - 1];
            if (fp.transformer_block_index < prev.transformer_block_index ||
                fp.conv_stage_index < prev.conv_stage_index ||
                (fp.transformer_block_index == prev.transformer_block_index &&
                 fp.conv_stage_index == prev.conv_stage_index))
                throw ConfigError(where + ": fusion points must advance through both streams");
        }
    }
}

/// One point after each third of the transformer depth, each paired with the
/// deepest conv stage at or before the proportional stage whose grid divides
/// evenly into patch cells.
inline std::vector<FusionPoint> default_fusion_points(const TransformerStreamConfig& t, const ConvStreamConfig& c) {
    std::vector<FusionPoint> points;
    const int stages = static_cast<int>(c.stage_channels.size());
    for (int k = 1; k <= 3; ++k) {
        const int block = std::max(0, (k * t.depth) / 3 - 1);
        int stage = std::clamp((k * stages + 2) / 3 - 1, 0, stages - 1);
        while (stage >= 0) {
            const int side = c.grid_after(static_cast<std::size_t>(stage));
            if (side >= t.grid() && side % t.grid() == 0) break;
            --stage;
        }
        if (stage < 0) continue;
        FusionPoint fp{block, stage, 0};
        if (!points.empty()) {
            const auto& prev = points.back();
            if (fp.transformer_block_index <= prev.transformer_block_index ||
                fp.conv_stage_index < prev.conv_stage_index)
                continue;
        }
        points.push_back(fp);
    }
    return points;
}

/// Toy dual-stream defaults at 32x32: ViT depth 6 / dim 192 / patch 4 and a
/// three-stage conv stream, fused after every third of the transformer.
inline ModelConfig default_dual_config(int num_classes = 10) {
    ModelConfig m;
    m.transformer->num_classes = num_classes;
    m.conv->num_classes = num_classes;
    m.fusion = default_fusion_points(*m.transformer, *m.conv);
    return m;
}

}  // namespace semiformer::models
