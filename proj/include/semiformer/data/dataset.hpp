#pragma once
// In-memory image classification datasets: CIFAR binary archives and a
// procedural stand-in with the same 32x32x3 shape for offline runs.

#include <torch/torch.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "semiformer/errors.hpp"
#include "semiformer/rng.hpp"

namespace semiformer::data {

struct DatasetInfo {
    std::string id;
    int num_classes = 0;
    int channels = 3;
    int height = 32;
    int width = 32;
    std::vector<double> mean;
    std::vector<double> stddev;
};

/// Known dataset ids: cifar10, cifar100, synthetic<K> (e.g. synthetic10).
inline DatasetInfo dataset_info(const std::string& id) {
    if (id == "cifar10") return {id, 10, 3, 32, 32, {0.4914, 0.4822, 0.4465}, {0.2470, 0.2435, 0.2616}};
    if (id == "cifar100") return {id, 100, 3, 32, 32, {0.5071, 0.4865, 0.4409}, {0.2673, 0.2564, 0.2762}};
    if (id.rfind("synthetic", 0) == 0) {
        const std::string digits = id.substr(9);
        int k = 10;
        if (!digits.empty()) {
            if (digits.find_first_not_of("0123456789") != std::string::npos)
                throw ConfigError("unknown dataset_id '" + id + "'");
            k = std::stoi(digits);
        }
        if (k < 2 || k > 100) throw ConfigError("synthetic dataset needs 2..100 classes, got " + digits);
        // Stats of the generator below, measured on 10 classes x 500 images.
        return {id, k, 3, 32, 32, {0.5000, 0.4996, 0.5002}, {0.2266, 0.2264, 0.2266}};
    }
    throw ConfigError("unknown dataset_id '" + id + "'");
}

struct Dataset {
    DatasetInfo info;
    torch::Tensor images;  // uint8 (N, C, H, W)
    std::vector<int> labels;

    std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
    int num_classes() const { return info.num_classes; }

    /// Float view in [0, 1], shape (C, H, W).
    torch::Tensor image(std::int64_t i) const {
        return images[i].to(torch::kFloat32).div_(255.0f);
    }

    std::map<int, std::int64_t> class_sizes() const {
        std::map<int, std::int64_t> sizes;
        for (int c = 0; c < info.num_classes; ++c) sizes[c] = 0;
        for (int y : labels) ++sizes[y];
        return sizes;
    }
};

struct DatasetPair {
    Dataset train;
    Dataset test;
};

/// Directory for dataset archives: $SEMIFORMER_DATA_DIR, else ./data.
inline std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("SEMIFORMER_DATA_DIR"); env && *env) return env;
    return "data";
}

namespace detail {

inline void read_cifar_records(const std::filesystem::path& file, int label_bytes, int label_offset,
                               std::vector<std::uint8_t>& pixels, std::vector<int>& labels) {
    constexpr std::size_t kImageBytes = 3 * 32 * 32;
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("cannot open dataset archive " + file.string());
    const std::size_t record = static_cast<std::size_t>(label_bytes) + kImageBytes;
    std::vector<char> buf(record);
    while (in.read(buf.data(), static_cast<std::streamsize>(record))) {
        labels.push_back(static_cast<std::uint8_t>(buf[static_cast<std::size_t>(label_offset)]));
        pixels.insert(pixels.end(), buf.begin() + label_bytes, buf.end());
    }
    if (in.gcount() != 0) throw Error("truncated record in " + file.string());
}

inline Dataset make_dataset(DatasetInfo info, std::vector<std::uint8_t>&& pixels, std::vector<int>&& labels) {
    Dataset ds;
    const auto n = static_cast<std::int64_t>(labels.size());
    ds.images = torch::from_blob(pixels.data(), {n, info.channels, info.height, info.width}, torch::kUInt8).clone();
    ds.labels = std::move(labels);
    ds.info = std::move(info);
    return ds;
}

}  // namespace detail

/// Reads the CIFAR-10 binary version (cifar-10-batches-bin/).
inline DatasetPair load_cifar10(const std::filesystem::path& root) {
    const auto dir = root / "cifar-10-batches-bin";
    std::vector<std::uint8_t> px;
    std::vector<int> y;
    for (int b = 1; b <= 5; ++b)
        detail::read_cifar_records(dir / ("data_batch_" + std::to_string(b) + ".bin"), 1, 0, px, y);
    DatasetPair pair;
    pair.train = detail::make_dataset(dataset_info("cifar10"), std::move(px), std::move(y));
    std::vector<std::uint8_t> tpx;
    std::vector<int> ty;
    detail::read_cifar_records(dir / "test_batch.bin", 1, 0, tpx, ty);
    pair.test = detail::make_dataset(dataset_info("cifar10"), std::move(tpx), std::move(ty));
    return pair;
}

/// Reads the CIFAR-100 binary version (cifar-100-binary/), fine labels.
inline DatasetPair load_cifar100(const std::filesystem::path& root) {
    const auto dir = root / "cifar-100-binary";
    DatasetPair pair;
    for (auto [name, target] : {std::pair{"train.bin", &pair.train}, std::pair{"test.bin", &pair.test}}) {
        std::vector<std::uint8_t> px;
        std::vector<int> y;
        detail::read_cifar_records(dir / name, 2, 1, px, y);
        *target = detail::make_dataset(dataset_info("cifar100"), std::move(px), std::move(y));
    }
    return pair;
}

inline bool cifar10_available(const std::filesystem::path& root) {
    return std::filesystem::exists(root / "cifar-10-batches-bin" / "data_batch_1.bin");
}

struct SyntheticOptions {
    std::int64_t train_per_class = 500;
    std::int64_t test_per_class = 100;
    std::uint64_t seed = 0x5eedULL;
    double noise = 0.08;

    bool operator==(const SyntheticOptions&) const = default;
};

/// Procedural 32x32 RGB classes. Each class is an oriented grating with a
/// class-specific frequency and tint; samples vary in phase, translation,
/// contrast and noise, and carry a distractor blob of random colour.
inline Dataset make_synthetic_split(const DatasetInfo& info, std::int64_t per_class, std::uint64_t seed, double noise) {
    const int K = info.num_classes;
    const int H = info.height, W = info.width, C = info.channels;
    std::vector<std::uint8_t> px;
    px.reserve(static_cast<std::size_t>(per_class * K * C * H * W));
    std::vector<int> labels;
    for (std::int64_t s = 0; s < per_class; ++s) {
        for (int k = 0; k < K; ++k) {
            Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(s)}));
            const double theta = std::numbers::pi * k / K + uniform(rng, -0.12, 0.12);
            const double freq = 2.0 + (k % 3) + uniform(rng, -0.25, 0.25);
            const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            const double contrast = uniform(rng, 0.5, 1.0);
            const double hue = 2.0 * std::numbers::pi * ((k * 7) % K) / K;
            const std::array<double, 3> tint{0.5 + 0.4 * std::cos(hue), 0.5 + 0.4 * std::cos(hue + 2.094),
                                             0.5 + 0.4 * std::cos(hue + 4.189)};
            const double bx = uniform(rng, 4.0, W - 4.0), by = uniform(rng, 4.0, H - 4.0);
            const double br = uniform(rng, 3.0, 6.0);
            const std::array<double, 3> bc{uniform(rng), uniform(rng), uniform(rng)};
            std::normal_distribution<double> gauss(0.0, noise);
            for (int c = 0; c < C; ++c) {
                for (int y = 0; y < H; ++y) {
                    for (int x = 0; x < W; ++x) {
                        const double u = (x * std::cos(theta) + y * std::sin(theta)) / W;
                        double v = 0.5 + 0.35 * contrast * std::sin(2.0 * std::numbers::pi * freq * u + phase) *
                                             (2.0 * tint[static_cast<std::size_t>(c % 3)]);
                        const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
                        if (d2 < br * br) v = 0.3 * v + 0.7 * bc[static_cast<std::size_t>(c % 3)];
                        v += gauss(rng);
                        v = std::clamp(v, 0.0, 1.0);
                        px.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
                    }
                }
            }
            labels.push_back(k);
        }
    }
    return detail::make_dataset(info, std::move(px), std::move(labels));
}

inline DatasetPair make_synthetic(const std::string& id, const SyntheticOptions& opt = {}) {
    const auto info = dataset_info(id);
    return {make_synthetic_split(info, opt.train_per_class, derive_seed(opt.seed, {1}), opt.noise),
            make_synthetic_split(info, opt.test_per_class, derive_seed(opt.seed, {2}), opt.noise)};
}

/// Loads a dataset by id. Synthetic ids are generated, CIFAR ids are read
/// from `root`.
inline DatasetPair load_dataset(const std::string& id, const std::filesystem::path& root,
                                const SyntheticOptions& synthetic = {}) {
    const auto info = dataset_info(id);  // validates id
    if (id == "cifar10") return load_cifar10(root);
    if (id == "cifar100") return load_cifar100(root);
    return make_synthetic(info.id, synthetic);
}

/// Keeps the first ceil(n / K) examples of every class (index order) so the
/// subset stays class balanced. n <= 0 keeps everything.
inline Dataset balanced_subset(const Dataset& ds, std::int64_t n) {
    if (n <= 0 || n >= ds.size()) return ds;
    const std::int64_t per_class = (n + ds.num_classes() - 1) / ds.num_classes();
    std::vector<std::int64_t> keep;
    std::vector<std::int64_t> taken(static_cast<std::size_t>(ds.num_classes()), 0);
    for (std::int64_t i = 0; i < ds.size() && static_cast<std::int64_t>(keep.size()) < n; ++i) {
        auto& t = taken[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])];
        if (t < per_class) {
            ++t;
            keep.push_back(i);
        }
    }
    Dataset out;
    out.info = ds.info;
    out.images = ds.images.index_select(0, torch::tensor(keep, torch::kInt64));
    for (auto i : keep) out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
    return out;
}

/// Per-channel mean / stddev over a uint8 image tensor, in [0,1] units.
inline std::pair<std::vector<double>, std::vector<double>> channel_stats(const torch::Tensor& images) {
    auto f = images.to(torch::kFloat64).div(255.0);
    auto mean = f.mean({0, 2, 3});
    auto sd = f.std({0, 2, 3}, /*unbiased=*/false);
    std::vector<double> m(static_cast<std::size_t>(mean.size(0))), s(m.size());
    for (std::size_t c = 0; c < m.size(); ++c) {
        m[c] = mean[static_cast<std::int64_t>(c)].item<double>();
        s[c] = sd[static_cast<std::int64_t>(c)].item<double>();
    }
    return {m, s};
}

}  // namespace semiformer::data
