#pragma once
// Weak (flip + padded crop) and strong (weak base, RandAugment-style ops,
// colour jitter, random erasing) views of a single (C, H, W) float image in
// [0, 1]. Every application is a pure function of (image, seed, params).

#include <torch/torch.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "semiformer/errors.hpp"
#include "semiformer/rng.hpp"

namespace semiformer::data {

enum class AugKind { weak, strong };

struct WeakParams {
    double flip_prob = 0.5;
    int pad = 4;  // reflect padding; crop offset is drawn from [0, 2*pad]

    bool operator==(const WeakParams&) const = default;
};

struct StrongParams {
    WeakParams base{};
    int num_ops = 2;
    double magnitude = 0.3;  // fraction of each op's maximum strength
    double erase_prob = 0.25;
    std::array<double, 2> erase_scale{0.02, 0.33};
    std::array<double, 2> erase_ratio{0.3, 3.3};
    float erase_fill = 0.5f;
    double jitter = 0.4;

    bool operator==(const StrongParams&) const = default;

    /// Every stochastic component disabled.
    static StrongParams identity() {
        StrongParams p;
        p.base = {0.0, 0};
        p.magnitude = 0.0;
        p.erase_prob = 0.0;
        p.jitter = 0.0;
        return p;
    }
};

enum class RandOp {
    identity, rotate, shear_x, shear_y, translate_x, translate_y,
    brightness, color, contrast, sharpness, solarize, posterize,
};

inline constexpr std::array kRandOps{
    RandOp::identity,  RandOp::rotate,     RandOp::shear_x, RandOp::shear_y,
    RandOp::translate_x, RandOp::translate_y, RandOp::brightness, RandOp::color,
    RandOp::contrast,  RandOp::sharpness,  RandOp::solarize, RandOp::posterize,
};

inline std::string to_string(RandOp op) {
    switch (op) {
        case RandOp::identity: return "identity";
        case RandOp::rotate: return "rotate";
        case RandOp::shear_x: return "shear_x";
        case RandOp::shear_y: return "shear_y";
        case RandOp::translate_x: return "translate_x";
        case RandOp::translate_y: return "translate_y";
        case RandOp::brightness: return "brightness";
        case RandOp::color: return "color";
        case RandOp::contrast: return "contrast";
        case RandOp::sharpness: return "sharpness";
        case RandOp::solarize: return "solarize";
        case RandOp::posterize: return "posterize";
    }
    return "?";
}

struct AugOpDescriptor {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;
};

/// Introspectable description of a policy; `rng_seed` is the per-example seed.
struct AugmentationPolicy {
    AugKind kind = AugKind::weak;
    std::vector<AugOpDescriptor> op_list;
    std::uint64_t rng_seed = 0;
};

inline AugmentationPolicy describe_policy(const WeakParams& p, std::uint64_t seed = 0) {
    return {AugKind::weak,
            {{"horizontal_flip", p.flip_prob, p.flip_prob}, {"reflect_pad_crop", 0.0, 2.0 * p.pad}},
            seed};
}

inline AugmentationPolicy describe_policy(const StrongParams& p, std::uint64_t seed = 0) {
    AugmentationPolicy pol = describe_policy(p.base, seed);
    pol.kind = AugKind::strong;
    pol.op_list.push_back({"randaugment(" + std::to_string(p.num_ops) + ")", -p.magnitude, p.magnitude});
    pol.op_list.push_back({"color_jitter", 1.0 - p.jitter, 1.0 + p.jitter});
    pol.op_list.push_back({"random_erasing", p.erase_scale[0], p.erase_scale[1]});
    return pol;
}

/// Mutable float image with (c, y, x) addressing.
class Image {
public:
    explicit Image(const torch::Tensor& t) {
        if (t.dim() != 3) throw ContractError("augmentation expects a (C,H,W) image");
        auto c = t.to(torch::kFloat32).contiguous();
        C_ = static_cast<int>(c.size(0));
        H_ = static_cast<int>(c.size(1));
        W_ = static_cast<int>(c.size(2));
        px_.assign(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
    }
    Image(int C, int H, int W, float fill = 0.0f)
        : C_(C), H_(H), W_(W), px_(static_cast<std::size_t>(C * H * W), fill) {}

    int channels() const { return C_; }
    int height() const { return H_; }
    int width() const { return W_; }
    float& at(int c, int y, int x) { return px_[idx(c, y, x)]; }
    float at(int c, int y, int x) const { return px_[idx(c, y, x)]; }
    std::vector<float>& pixels() { return px_; }
    const std::vector<float>& pixels() const { return px_; }

    torch::Tensor tensor() const {
        return torch::from_blob(const_cast<float*>(px_.data()), {C_, H_, W_}, torch::kFloat32).clone();
    }

private:
    std::size_t idx(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * static_cast<std::size_t>(H_) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(W_) + static_cast<std::size_t>(x);
    }
    int C_ = 0, H_ = 0, W_ = 0;
    std::vector<float> px_;
};

struct Rect {
    int top = 0, left = 0, height = 0, width = 0;
};

namespace ops {

inline Image hflip(const Image& in) {
    Image out(in.channels(), in.height(), in.width());
    for (int c = 0; c < in.channels(); ++c)
        for (int y = 0; y < in.height(); ++y)
            for (int x = 0; x < in.width(); ++x) out.at(c, y, x) = in.at(c, y, in.width() - 1 - x);
    return out;
}

inline int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
}

/// Crop of the reflect-padded image at (oy, ox) in padded coordinates.
inline Image padded_crop(const Image& in, int pad, int oy, int ox) {
    Image out(in.channels(), in.height(), in.width());
    for (int c = 0; c < in.channels(); ++c)
        for (int y = 0; y < in.height(); ++y)
            for (int x = 0; x < in.width(); ++x)
                out.at(c, y, x) = in.at(c, reflect(y + oy - pad, in.height()), reflect(x + ox - pad, in.width()));
    return out;
}

/// out = f * img + (1 - f) * degenerate, clamped to [0, 1]. f == 1 is exact.
inline void blend(Image& img, const Image& degenerate, double factor) {
    const auto f = static_cast<float>(factor);
    auto& p = img.pixels();
    const auto& d = degenerate.pixels();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(f * p[i] + (1.0f - f) * d[i], 0.0f, 1.0f);
}

inline Image grayscale(const Image& in) {
    Image g(in.channels(), in.height(), in.width());
    for (int y = 0; y < in.height(); ++y)
        for (int x = 0; x < in.width(); ++x) {
            float v = in.at(0, y, x);
            if (in.channels() >= 3) v = 0.299f * in.at(0, y, x) + 0.587f * in.at(1, y, x) + 0.114f * in.at(2, y, x);
            for (int c = 0; c < in.channels(); ++c) g.at(c, y, x) = v;
        }
    return g;
}

inline void brightness(Image& img, double f) {
    if (f == 1.0) return;
    blend(img, Image(img.channels(), img.height(), img.width(), 0.0f), f);
}

inline void saturation(Image& img, double f) {
    if (f == 1.0) return;
    blend(img, grayscale(img), f);
}

inline void contrast(Image& img, double f) {
    if (f == 1.0) return;
    const auto g = grayscale(img);
    double mean = 0.0;
    for (float v : g.pixels()) mean += v;
    mean /= static_cast<double>(g.pixels().size());
    blend(img, Image(img.channels(), img.height(), img.width(), static_cast<float>(mean)), f);
}

inline void sharpness(Image& img, double f) {
    if (f == 1.0) return;
    Image smooth = img;
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 1; y + 1 < img.height(); ++y)
            for (int x = 1; x + 1 < img.width(); ++x) {
                float s = 4.0f * img.at(c, y, x);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) s += img.at(c, y + dy, x + dx);
                smooth.at(c, y, x) = s / 13.0f;
            }
    blend(img, smooth, f);
}

inline void solarize(Image& img, double threshold) {
    for (auto& v : img.pixels())
        if (v > threshold) v = 1.0f - v;
}

inline void posterize(Image& img, int bits) {
    if (bits >= 8) return;
    const float levels = static_cast<float>(1 << bits);
    for (auto& v : img.pixels()) v = std::min(std::floor(v * levels), levels - 1.0f) / (levels - 1.0f);
}

/// Inverse-mapped affine warp about the image centre with bilinear sampling.
/// (a b; c d) maps output offsets to source offsets, (tx, ty) is added.
inline Image affine(const Image& in, double a, double b, double c, double d, double tx, double ty,
                    float fill = 0.5f) {
    Image out(in.channels(), in.height(), in.width(), fill);
    const double cy = (in.height() - 1) / 2.0, cx = (in.width() - 1) / 2.0;
    for (int y = 0; y < in.height(); ++y)
        for (int x = 0; x < in.width(); ++x) {
            const double dx = x - cx, dy = y - cy;
            const double sx = a * dx + b * dy + cx + tx;
            const double sy = c * dx + d * dy + cy + ty;
            const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
            const double wx = sx - x0, wy = sy - y0;
            for (int ch = 0; ch < in.channels(); ++ch) {
                auto sample = [&](int yy, int xx) -> double {
                    if (yy < 0 || yy >= in.height() || xx < 0 || xx >= in.width()) return fill;
                    return in.at(ch, yy, xx);
                };
                const double v = (1 - wy) * ((1 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1)) +
                                 wy * ((1 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1));
                out.at(ch, y, x) = static_cast<float>(v);
            }
        }
    return out;
}

inline void erase(Image& img, const Rect& r, float fill) {
    for (int c = 0; c < img.channels(); ++c)
        for (int y = r.top; y < r.top + r.height; ++y)
            for (int x = r.left; x < r.left + r.width; ++x) img.at(c, y, x) = fill;
}

/// Applies one RandAugment-style op at signed strength `m` in [-1, 1].
inline void apply_rand_op(Image& img, RandOp op, double m) {
    if (m == 0.0) return;
    const double deg = std::numbers::pi / 180.0;
    switch (op) {
        case RandOp::identity: return;
        case RandOp::rotate: {
            const double t = 30.0 * deg * m;
            img = affine(img, std::cos(t), -std::sin(t), std::sin(t), std::cos(t), 0, 0);
            return;
        }
        case RandOp::shear_x: img = affine(img, 1, 0.3 * m, 0, 1, 0, 0); return;
        case RandOp::shear_y: img = affine(img, 1, 0, 0.3 * m, 1, 0, 0); return;
        case RandOp::translate_x: img = affine(img, 1, 0, 0, 1, 0.3 * img.width() * m, 0); return;
        case RandOp::translate_y: img = affine(img, 1, 0, 0, 1, 0, 0.3 * img.height() * m); return;
        case RandOp::brightness: brightness(img, 1.0 + 0.9 * m); return;
        case RandOp::color: saturation(img, 1.0 + 0.9 * m); return;
        case RandOp::contrast: contrast(img, 1.0 + 0.9 * m); return;
        case RandOp::sharpness: sharpness(img, 1.0 + 0.9 * m); return;
        case RandOp::solarize: solarize(img, 1.0 - std::abs(m)); return;
        case RandOp::posterize: posterize(img, 8 - static_cast<int>(std::lround(4.0 * std::abs(m)))); return;
    }
}

}  // namespace ops

namespace detail {

inline Image apply_weak(Image img, const WeakParams& p, Rng& rng) {
    if (uniform(rng) < p.flip_prob) img = ops::hflip(img);
    if (p.pad > 0) {
        const int oy = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(2 * p.pad + 1)));
        const int ox = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(2 * p.pad + 1)));
        img = ops::padded_crop(img, p.pad, oy, ox);
    }
    return img;
}

}  // namespace detail

inline torch::Tensor weak_augment(const torch::Tensor& image, std::uint64_t seed, const WeakParams& p = {}) {
    Rng rng(seed);
    return detail::apply_weak(Image(image), p, rng).tensor();
}

/// Random erasing rectangle draw; nullopt when no placement fits.
inline std::optional<Rect> sample_erase_rect(int H, int W, const StrongParams& p, Rng& rng) {
    const double area = static_cast<double>(H) * W;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * uniform(rng, p.erase_scale[0], p.erase_scale[1]);
        const double ratio = std::exp(uniform(rng, std::log(p.erase_ratio[0]), std::log(p.erase_ratio[1])));
        const int h = static_cast<int>(std::lround(std::sqrt(target * ratio)));
        const int w = static_cast<int>(std::lround(std::sqrt(target / ratio)));
        if (h >= 1 && w >= 1 && h < H && w < W) {
            const int top = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(H - h + 1)));
            const int left = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(W - w + 1)));
            return Rect{top, left, h, w};
        }
    }
    return std::nullopt;
}

inline torch::Tensor strong_augment(const torch::Tensor& image, std::uint64_t seed, const StrongParams& p = {}) {
    Rng rng(seed);
    Image img = detail::apply_weak(Image(image), p.base, rng);
    for (int k = 0; k < p.num_ops; ++k) {
        const auto op = kRandOps[uniform_index(rng, kRandOps.size())];
        const double sign = uniform(rng) < 0.5 ? -1.0 : 1.0;
        ops::apply_rand_op(img, op, sign * p.magnitude);
    }
    if (p.jitter > 0.0) {
        ops::brightness(img, uniform(rng, 1.0 - p.jitter, 1.0 + p.jitter));
        ops::contrast(img, uniform(rng, 1.0 - p.jitter, 1.0 + p.jitter));
        ops::saturation(img, uniform(rng, 1.0 - p.jitter, 1.0 + p.jitter));
    }
    if (p.erase_prob > 0.0 && uniform(rng) < p.erase_prob) {
        if (auto r = sample_erase_rect(img.height(), img.width(), p, rng)) ops::erase(img, *r, p.erase_fill);
    }
    return img.tensor();
}

/// Per-channel (x - mean) / std on a (C,H,W) or (N,C,H,W) tensor.
inline torch::Tensor normalize(const torch::Tensor& images, const std::vector<double>& mean,
                               const std::vector<double>& stddev) {
    const auto C = images.size(images.dim() - 3);
    if (static_cast<std::int64_t>(mean.size()) != C || static_cast<std::int64_t>(stddev.size()) != C)
        throw ContractError("normalization stats do not match channel count");
    std::vector<std::int64_t> shape(static_cast<std::size_t>(images.dim()), 1);
    shape[static_cast<std::size_t>(images.dim() - 3)] = C;
    auto m = torch::tensor(mean, torch::kFloat32).view(shape);
    auto s = torch::tensor(stddev, torch::kFloat32).view(shape);
    return (images - m) / s;
}

}  // namespace semiformer::data
