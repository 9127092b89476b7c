#pragma once
// Toy transformer and convolutional streams. Both expose their forward pass
// in pieces (embed / blocks / head, stem / stages / head) so the dual model
// can interleave them at fusion points.

#include <torch/torch.h>

#include <cmath>
#include <string>

#include "semiformer/errors.hpp"
#include "semiformer/models/config.hpp"

namespace semiformer::models {

inline void check_finite(const torch::Tensor& t, const std::string& layer) {
    if (!torch::isfinite(t).all().item<bool>()) throw NumericalError(layer, "non-finite activation");
}

/// Pre-norm transformer encoder block.
struct EncoderBlockImpl : torch::nn::Module {
    EncoderBlockImpl(int dim, int heads, double mlp_ratio)
        : heads_(heads),
          norm1(register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})))),
          qkv(register_module("qkv", torch::nn::Linear(dim, 3 * dim))),
          proj(register_module("proj", torch::nn::Linear(dim, dim))),
          norm2(register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})))),
          fc1(register_module("fc1", torch::nn::Linear(dim, static_cast<int>(std::lround(dim * mlp_ratio))))),
          fc2(register_module("fc2", torch::nn::Linear(static_cast<int>(std::lround(dim * mlp_ratio)), dim))) {}

    torch::Tensor forward(torch::Tensor x) {
        const auto B = x.size(0), N = x.size(1), D = x.size(2);
        const auto hd = D / heads_;
        auto h = qkv(norm1(x)).reshape({B, N, 3, heads_, hd}).permute({2, 0, 3, 1, 4});
        auto q = h[0], k = h[1], v = h[2];
        auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd)), -1);
        auto out = torch::matmul(attn, v).transpose(1, 2).reshape({B, N, D});
        x = x + proj(out);
        return x + fc2(torch::gelu(fc1(norm2(x))));
    }

    int heads_;
    torch::nn::LayerNorm norm1;
    torch::nn::Linear qkv, proj;
    torch::nn::LayerNorm norm2;
    torch::nn::Linear fc1, fc2;
};
TORCH_MODULE(EncoderBlock);

struct TransformerStreamImpl : torch::nn::Module {
    explicit TransformerStreamImpl(const TransformerStreamConfig& c) : config(c) {
        validate(c);
        patch_embed = register_module(
            "patch_embed",
            torch::nn::Conv2d(torch::nn::Conv2dOptions(c.in_channels, c.embed_dim, c.patch_size).stride(c.patch_size)));
        cls_token = register_parameter("cls_token", torch::randn({1, 1, c.embed_dim}) * 0.02);
        pos_embed = register_parameter("pos_embed", torch::randn({1, 1 + c.num_patches(), c.embed_dim}) * 0.02);
        blocks = register_module("blocks", torch::nn::ModuleList());
        for (int i = 0; i < c.depth; ++i) blocks->push_back(EncoderBlock(c.embed_dim, c.heads, c.mlp_ratio));
        norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c.embed_dim})));
        head = register_module("head", torch::nn::Linear(c.embed_dim, c.num_classes));
    }

    /// (B, C, H, W) -> (B, 1 + h*w, d) with the class token first.
    torch::Tensor embed(const torch::Tensor& x) {
        auto patches = patch_embed(x).flatten(2).transpose(1, 2);
        auto cls = cls_token.expand({x.size(0), -1, -1});
        return torch::cat({cls, patches}, 1) + pos_embed;
    }

    torch::Tensor run_block(std::size_t i, const torch::Tensor& tokens) {
        return blocks[i]->as<EncoderBlock>()->forward(tokens);
    }

    torch::Tensor logits(const torch::Tensor& tokens) {
        return head(norm(tokens).select(1, 0));
    }

    torch::Tensor forward(const torch::Tensor& x) {
        auto t = embed(x);
        for (std::size_t i = 0; i < blocks->size(); ++i) t = run_block(i, t);
        return logits(t);
    }

    TransformerStreamConfig config;
    torch::nn::Conv2d patch_embed{nullptr};
    torch::Tensor cls_token, pos_embed;
    torch::nn::ModuleList blocks{nullptr};
    torch::nn::LayerNorm norm{nullptr};
    torch::nn::Linear head{nullptr};
};
TORCH_MODULE(TransformerStream);

struct ResidualBlockImpl : torch::nn::Module {
    ResidualBlockImpl(int in, int out, int stride) {
        conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)));
        bn1 = register_module("bn1", torch::nn::BatchNorm2d(out));
        conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1).bias(false)));
        bn2 = register_module("bn2", torch::nn::BatchNorm2d(out));
        if (stride != 1 || in != out) {
            shortcut = register_module(
                "shortcut", torch::nn::Sequential(
                                torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                                torch::nn::BatchNorm2d(out)));
        }
    }

    torch::Tensor forward(const torch::Tensor& x) {
        auto h = torch::relu(bn1(conv1(x)));
        h = bn2(conv2(h));
        return torch::relu(h + (shortcut ? shortcut->forward(x) : x));
    }

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
    torch::nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(ResidualBlock);

struct ConvStreamImpl : torch::nn::Module {
    explicit ConvStreamImpl(const ConvStreamConfig& c) : config(c) {
        validate(c);
        const int c0 = c.stage_channels.front();
        stem = register_module("stem", torch::nn::Sequential(
                                           torch::nn::Conv2d(torch::nn::Conv2dOptions(c.in_channels, c0, 3).padding(1).bias(false)),
                                           torch::nn::BatchNorm2d(c0), torch::nn::ReLU()));
        stages = register_module("stages", torch::nn::ModuleList());
        int in = c0;
        for (std::size_t s = 0; s < c.stage_channels.size(); ++s) {
            torch::nn::Sequential stage;
            for (int b = 0; b < c.stage_depths[s]; ++b) {
                stage->push_back(ResidualBlock(in, c.stage_channels[s], b == 0 ? c.downsample_factors[s] : 1));
                in = c.stage_channels[s];
            }
            stages->push_back(stage);
        }
        head = register_module("head", torch::nn::Linear(in, c.num_classes));
    }

    torch::Tensor run_stem(const torch::Tensor& x) { return stem->forward(x); }

    torch::Tensor run_stage(std::size_t s, const torch::Tensor& x) {
        return stages[s]->as<torch::nn::Sequential>()->forward(x);
    }

    /// Global average pool then linear.
    torch::Tensor logits(const torch::Tensor& fmap) { return head(fmap.mean({2, 3})); }

    torch::Tensor forward(const torch::Tensor& x) {
        auto f = run_stem(x);
        for (std::size_t s = 0; s < stages->size(); ++s) f = run_stage(s, f);
        return logits(f);
    }

    ConvStreamConfig config;
    torch::nn::Sequential stem{nullptr};
    torch::nn::ModuleList stages{nullptr};
    torch::nn::Linear head{nullptr};
};
TORCH_MODULE(ConvStream);

}  // namespace semiformer::models
