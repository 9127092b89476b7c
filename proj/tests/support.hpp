#pragma once
// Shared test helpers. The oracle:: functions recompute quantities in plain
// double arithmetic, without torch, so they can check the library.

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "semiformer/semiformer.hpp"

namespace testing_support {

namespace oracle {

inline std::vector<double> softmax(const std::vector<double>& z) {
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double s = 0;
    for (std::size_t k = 0; k < z.size(); ++k) s += p[k] = std::exp(z[k] - m);
    for (auto& v : p) v /= s;
    return p;
}

inline double cross_entropy(const std::vector<double>& target, const std::vector<double>& probs) {
    double s = 0;
    for (std::size_t k = 0; k < target.size(); ++k) s -= target[k] * std::log(std::max(probs[k], 1e-12));
    return s;
}

/// Linear warmup then cosine from lr_init to lr_final over the remaining steps.
inline double lr(std::int64_t step, std::int64_t warmup, std::int64_t total, double lr_init, double lr_final) {
    if (step < warmup) return lr_init * static_cast<double>(step) / static_cast<double>(warmup);
    const double T = static_cast<double>(total - 1 - warmup);
    const double t = std::min(static_cast<double>(step - warmup), T);
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + std::cos(M_PI * t / T));
}

/// LayerNorm of one vector with affine (gamma, beta), eps 1e-5.
inline std::vector<double> layer_norm(const std::vector<double>& v, const std::vector<double>& gamma,
                                      const std::vector<double>& beta) {
    double mean = 0, var = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / std::sqrt(var + 1e-5) * gamma[i] + beta[i];
    return out;
}

/// Expected number of distinct values among n uniform draws from m outcomes.
inline double expected_distinct(double m, double n) { return m * (1.0 - std::pow(1.0 - 1.0 / m, n)); }

}  // namespace oracle

inline std::vector<double> to_vec(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kFloat64).contiguous().flatten();
    return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

/// Max relative error between autograd gradients and central differences of
/// `f` (a scalar function of the given double tensors, all requiring grad).
inline double gradcheck_max_rel_error(const std::function<torch::Tensor()>& f, std::vector<torch::Tensor> inputs,
                                      double h = 1e-6) {
    for (auto& x : inputs) x.mutable_grad() = torch::Tensor();
    f().backward();
    double worst = 0.0;
    for (auto& x : inputs) {
        const auto analytic = to_vec(x.grad());
        auto flat = x.detach().view({-1});
        for (std::int64_t i = 0; i < flat.numel(); ++i) {
            const double orig = flat[i].item<double>();
            double plus, minus;
            {
                torch::NoGradGuard g;
                flat[i] = orig + h;
                plus = f().item<double>();
                flat[i] = orig - h;
                minus = f().item<double>();
                flat[i] = orig;
            }
            const double numeric = (plus - minus) / (2 * h);
            const double a = analytic[static_cast<std::size_t>(i)];
            const double rel = std::abs(a - numeric) / std::max({1e-3, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

/// Small dual model on 16x16 inputs: 4x4 token grid, conv grids 16/8/4.
inline semiformer::models::ModelConfig tiny_model(int K = 4, bool fused = true, int image = 16) {
    using namespace semiformer::models;
    ModelConfig m;
    m.transformer = TransformerStreamConfig{image, 3, 4, 16, 3, 2, 2.0, K};
    m.conv = ConvStreamConfig{image, 3, {8, 12, 16}, {1, 1, 1}, {1, 2, 2}, K};
    if (fused) m.fusion = default_fusion_points(*m.transformer, *m.conv);
    return m;
}

/// Small experiment on the synthetic dataset: 400 training / 100 test images.
inline semiformer::experiment::ExperimentConfig tiny_experiment(const std::filesystem::path& out) {
    semiformer::experiment::ExperimentConfig c;
    c.output_dir = out.string();
    c.data.split.dataset_id = "synthetic10";
    c.data.split.label_fraction = 0.1;
    c.data.train_subset = 400;
    c.data.eval_subset = 100;
    c.data.synthetic.train_per_class = 40;
    c.data.synthetic.test_per_class = 10;
    c.train.total_epochs = 3;
    c.train.warmup_epochs = 1;
    c.train.labeled_only_epochs = 0;
    c.train.n_l = 8;
    c.train.mu = 2;
    c.train.tau = 0.2;
    c.model.embed_dim = 16;
    c.model.depth = 3;
    c.model.heads = 2;
    c.model.mlp_ratio = 2.0;
    c.model.stage_channels = {8, 12, 16};
    return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("semiformer_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing_support
