#pragma once
// Cross-stream feature exchange between patch tokens and the conv
// sub-feature-maps covering the same image area. Token i on an h_T x w_T grid
// owns the (H_c/h_T) x (W_c/w_T) block of the conv map at the same position.
//
//   conv -> tokens:  token_i += LayerNorm(AvgPool(Conv1x1(M_C,i)))
//   tokens -> conv:  M_C,i   += BatchNorm(Upsample(Conv1x1(token_i)))
//
// The class token never takes part.

#include <torch/torch.h>

#include <string>

#include "semiformer/errors.hpp"
#include "semiformer/models/config.hpp"

namespace semiformer::models {

namespace detail {

inline void check_grid(const torch::Tensor& conv_map, int token_grid) {
    if (conv_map.dim() != 4) throw ContractError("conv map must be (B, C, H, W)");
    if (conv_map.size(2) % token_grid != 0 || conv_map.size(3) % token_grid != 0)
        throw ContractError("conv map " + std::to_string(conv_map.size(2)) + "x" + std::to_string(conv_map.size(3)) +
                            " not divisible by token grid " + std::to_string(token_grid));
}

inline void zero_(torch::Tensor t) {
    torch::NoGradGuard g;
    if (t.defined()) t.zero_();
}

}  // namespace detail

struct ConvToTokensImpl : torch::nn::Module {
    ConvToTokensImpl(int conv_dim, int token_dim, int token_grid) : token_grid(token_grid) {
        align = register_module("align", torch::nn::Conv2d(torch::nn::Conv2dOptions(conv_dim, token_dim, 1)));
        norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({token_dim})));
    }

    /// Additive term for the patch tokens, (B, h_T*w_T, d_T).
    torch::Tensor delta(const torch::Tensor& conv_map) {
        detail::check_grid(conv_map, token_grid);
        const auto kh = conv_map.size(2) / token_grid, kw = conv_map.size(3) / token_grid;
        auto pooled = torch::avg_pool2d(align(conv_map), {kh, kw}, {kh, kw});
        return norm(pooled.flatten(2).transpose(1, 2));
    }

    /// tokens: (B, 1 + h_T*w_T, d_T) with the class token first.
    torch::Tensor forward(const torch::Tensor& tokens, const torch::Tensor& conv_map) {
        return apply(tokens, delta(conv_map));
    }

    static torch::Tensor apply(const torch::Tensor& tokens, const torch::Tensor& d) {
        using torch::indexing::Slice;
        return torch::cat({tokens.index({Slice(), Slice(0, 1)}), tokens.index({Slice(), Slice(1)}) + d}, 1);
    }

    void zero_init() {
        detail::zero_(align->weight);
        detail::zero_(align->bias);
        detail::zero_(norm->weight);
        detail::zero_(norm->bias);
    }

    int token_grid;
    torch::nn::Conv2d align{nullptr};
    torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(ConvToTokens);

struct TokensToConvImpl : torch::nn::Module {
    TokensToConvImpl(int token_dim, int conv_dim, int token_grid, UpsampleMode mode)
        : token_grid(token_grid), mode(mode) {
        align = register_module("align", torch::nn::Conv2d(torch::nn::Conv2dOptions(token_dim, conv_dim, 1)));
        norm = register_module("norm", torch::nn::BatchNorm2d(conv_dim));
    }

    /// Additive term for a conv map of spatial size (H, W), (B, d_C, H, W).
    torch::Tensor delta(const torch::Tensor& tokens, std::int64_t H, std::int64_t W) {
        using torch::indexing::Slice;
        const auto B = tokens.size(0), D = tokens.size(2);
        if (tokens.size(1) != 1 + static_cast<std::int64_t>(token_grid) * token_grid)
            throw ContractError("token count does not match the token grid");
        auto grid = tokens.index({Slice(), Slice(1)}).transpose(1, 2).reshape({B, D, token_grid, token_grid});
        auto aligned = align(grid);
        namespace F = torch::nn::functional;
        auto opts = F::InterpolateFuncOptions().size(std::vector<std::int64_t>{H, W});
        if (mode == UpsampleMode::nearest)
            opts.mode(torch::kNearest);
        else
            opts.mode(torch::kBilinear).align_corners(false);
        return norm(F::interpolate(aligned, opts));
    }

    torch::Tensor forward(const torch::Tensor& conv_map, const torch::Tensor& tokens) {
        detail::check_grid(conv_map, token_grid);
        return conv_map + delta(tokens, conv_map.size(2), conv_map.size(3));
    }

    void zero_init() {
        detail::zero_(align->weight);
        detail::zero_(align->bias);
        detail::zero_(norm->weight);
        detail::zero_(norm->bias);
    }

    int token_grid;
    UpsampleMode mode;
    torch::nn::Conv2d align{nullptr};
    torch::nn::BatchNorm2d norm{nullptr};
};
TORCH_MODULE(TokensToConv);

/// Both directions at one fusion point.
struct FusionUnitImpl : torch::nn::Module {
    FusionUnitImpl(int token_dim, int conv_dim, int token_grid, UpsampleMode mode, FusionOrder order)
        : order(order) {
        c2t = register_module("c2t", ConvToTokens(conv_dim, token_dim, token_grid));
        t2c = register_module("t2c", TokensToConv(token_dim, conv_dim, token_grid, mode));
    }

    /// Returns (tokens', conv_map').
    std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& tokens, const torch::Tensor& conv_map) {
        if (order == FusionOrder::symmetric) {
            auto dt = c2t->delta(conv_map);
            auto dc = t2c->delta(tokens, conv_map.size(2), conv_map.size(3));
            return {ConvToTokensImpl::apply(tokens, dt), conv_map + dc};
        }
        auto t = c2t->forward(tokens, conv_map);
        return {t, t2c->forward(conv_map, t)};
    }

    void zero_init() {
        c2t->zero_init();
        t2c->zero_init();
    }

    FusionOrder order;
    ConvToTokens c2t{nullptr};
    TokensToConv t2c{nullptr};
};
TORCH_MODULE(FusionUnit);

}  // namespace semiformer::models
