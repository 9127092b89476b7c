#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>

#include "support.hpp"

using namespace semiformer;
using namespace testing_support;

namespace {

std::vector<int> labels_with_sizes(const std::vector<int>& sizes) {
    std::vector<int> labels;
    // interleave classes so index order is not sorted by class
    const int most = *std::max_element(sizes.begin(), sizes.end());
    for (int i = 0; i < most; ++i)
        for (std::size_t c = 0; c < sizes.size(); ++c)
            if (i < sizes[c]) labels.push_back(static_cast<int>(c));
    return labels;
}

torch::Tensor test_image(std::uint64_t seed = 7, int C = 3, int H = 32, int W = 32) {
    torch::manual_seed(seed);
    return torch::rand({C, H, W});
}

bool same(const torch::Tensor& a, const torch::Tensor& b) { return a.sizes() == b.sizes() && torch::equal(a, b); }

}  // namespace

// ---- splits ----

TEST(Split, CifarShapedTenPercent) {
    const auto labels = labels_with_sizes(std::vector<int>(10, 5000));
    const auto split = data::make_split({"cifar10", 0.1, 1, true}, labels);
    EXPECT_EQ(split.labeled_indices.size(), 5000u);
    EXPECT_EQ(split.unlabeled_indices.size(), 45000u);
    std::map<int, int> per_class;
    for (auto i : split.labeled_indices) ++per_class[labels[static_cast<std::size_t>(i)]];
    for (int c = 0; c < 10; ++c) EXPECT_EQ(per_class[c], 500) << "class " << c;
}

TEST(Split, FullFractionLeavesNothingUnlabeled) {
    const auto labels = labels_with_sizes({7, 9, 4});
    const auto split = data::make_split({"synthetic3", 1.0, 5, true}, labels);
    EXPECT_TRUE(split.unlabeled_indices.empty());
    EXPECT_EQ(split.labeled_indices.size(), labels.size());
}

TEST(Split, SameSpecSameIndices) {
    const auto labels = labels_with_sizes(std::vector<int>(10, 300));
    const data::SplitSpec spec{"cifar10", 0.1, 42, true};
    const auto a = data::make_split(spec, labels);
    const auto b = data::make_split(spec, labels);
    EXPECT_EQ(a.labeled_indices, b.labeled_indices);
    EXPECT_EQ(a.unlabeled_indices, b.unlabeled_indices);
    auto other = spec;
    other.seed = 43;
    EXPECT_NE(data::make_split(other, labels).labeled_indices, a.labeled_indices);
}

TEST(Split, PartitionAndStratificationOverGrid) {
    const std::vector<std::vector<int>> shapes{{5, 5, 5}, {1, 2, 3}, {10, 1, 7}, {50, 13, 29}, {3, 3, 100}};
    for (const auto& sizes : shapes) {
        const auto labels = labels_with_sizes(sizes);
        for (double f : {0.34, 0.5, 0.75, 1.0}) {
            for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
                data::DatasetSplit split;
                try {
                    split = data::make_split({"synthetic3", f, seed, true}, labels);
                } catch (const SplitError&) {
                    continue;  // covered by the error test
                }
                std::vector<int> seen(labels.size(), 0);
                for (auto i : split.labeled_indices) ++seen[static_cast<std::size_t>(i)];
                for (auto i : split.unlabeled_indices) ++seen[static_cast<std::size_t>(i)];
                for (int s : seen) ASSERT_EQ(s, 1);
                ASSERT_TRUE(std::is_sorted(split.labeled_indices.begin(), split.labeled_indices.end()));
                ASSERT_TRUE(std::is_sorted(split.unlabeled_indices.begin(), split.unlabeled_indices.end()));
                std::vector<int> per_class(sizes.size(), 0);
                for (auto i : split.labeled_indices) ++per_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
                for (std::size_t c = 0; c < sizes.size(); ++c)
                    EXPECT_LE(std::abs(per_class[c] - std::round(f * sizes[c])), 1.0);
            }
        }
    }
}

TEST(Split, UnknownDatasetIsConfigError) {
    const auto labels = labels_with_sizes({3, 3});
    EXPECT_THROW(data::make_split({"imagenet", 0.5, 1, true}, labels), ConfigError);
}

TEST(Split, EmptyClassAllocationNamesTheClass) {
    const auto labels = labels_with_sizes({10, 10, 3});
    try {
        data::make_split({"synthetic3", 0.1, 1, true}, labels);
        FAIL() << "expected SplitError";
    } catch (const SplitError& e) {
        EXPECT_EQ(e.offending_class(), 2);
    }
}

TEST(Split, BadFractionRejected) {
    const auto labels = labels_with_sizes({3, 3});
    EXPECT_THROW(data::make_split({"synthetic2", 0.0, 1, true}, labels), ConfigError);
    EXPECT_THROW(data::make_split({"synthetic2", 1.5, 1, true}, labels), ConfigError);
}

TEST(Split, FileRoundTripIsByteIdentical) {
    const auto dir = temp_dir("split_file");
    const auto labels = labels_with_sizes(std::vector<int>(10, 50));
    const auto split = data::make_split({"synthetic10", 0.2, 3, true}, labels);
    data::save_split(split, dir / "a.json");
    data::save_split(data::make_split({"synthetic10", 0.2, 3, true}, labels), dir / "b.json");
    EXPECT_EQ(read_file(dir / "a.json"), read_file(dir / "b.json"));
    auto loaded = data::load_split(dir / "a.json");
    EXPECT_EQ(loaded, split);
    data::save_split(loaded, dir / "c.json");
    EXPECT_EQ(read_file(dir / "a.json"), read_file(dir / "c.json"));
    const auto j = nlohmann::json::parse(read_file(dir / "a.json"));
    EXPECT_EQ(j.size(), 3u);  // spec + two index lists, no labels
}

TEST(Split, HiddenLabelsOnlyForUnlabeled) {
    const auto labels = labels_with_sizes({20, 20});
    auto split = data::make_split({"synthetic2", 0.25, 1, true}, labels);
    for (auto i : split.unlabeled_indices) EXPECT_EQ(split.hidden_label(i), labels[static_cast<std::size_t>(i)]);
    EXPECT_THROW(split.hidden_label(split.labeled_indices.front()), std::out_of_range);
}

// ---- datasets ----

TEST(Dataset, SyntheticStatsMatchDeclaredNormalization) {
    const auto pair = data::make_synthetic("synthetic10");
    EXPECT_EQ(pair.train.size(), 5000);
    EXPECT_EQ(pair.test.size(), 1000);
    const auto [mean, sd] = data::channel_stats(pair.train.images);
    const auto info = data::dataset_info("synthetic10");
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_NEAR(mean[c], info.mean[c], 1e-3) << "channel " << c;
        EXPECT_NEAR(sd[c], info.stddev[c], 1e-3) << "channel " << c;
    }
}

TEST(Dataset, SyntheticIsDeterministic) {
    data::SyntheticOptions o;
    o.train_per_class = 3;
    o.test_per_class = 1;
    const auto a = data::make_synthetic("synthetic4", o);
    const auto b = data::make_synthetic("synthetic4", o);
    EXPECT_TRUE(torch::equal(a.train.images, b.train.images));
    EXPECT_EQ(a.train.labels, b.train.labels);
    EXPECT_EQ(a.train.class_sizes().at(3), 3);
}

TEST(Dataset, ReadsCifarBinaryRecords) {
    const auto root = temp_dir("cifar_bin");
    const auto dir = root / "cifar-10-batches-bin";
    std::filesystem::create_directories(dir);
    auto write_batch = [&](const std::string& name, int n, int label_base) {
        std::ofstream out(dir / name, std::ios::binary);
        for (int r = 0; r < n; ++r) {
            out.put(static_cast<char>((label_base + r) % 10));
            for (int p = 0; p < 3072; ++p) out.put(static_cast<char>((p + r) % 251));
        }
    };
    for (int b = 1; b <= 5; ++b) write_batch("data_batch_" + std::to_string(b) + ".bin", 2, b);
    write_batch("test_batch.bin", 3, 0);
    ASSERT_TRUE(data::cifar10_available(root));
    const auto pair = data::load_cifar10(root);
    EXPECT_EQ(pair.train.size(), 10);
    EXPECT_EQ(pair.test.size(), 3);
    EXPECT_EQ(pair.train.labels[0], 1);
    EXPECT_EQ(pair.train.labels[3], 3);
    EXPECT_EQ(pair.test.images.sizes(), (std::vector<std::int64_t>{3, 3, 32, 32}));
    // pixel p of record r is (p + r) % 251, channel-major
    EXPECT_EQ(pair.test.images[2][1][0][5].item<int>(), (1024 + 5 + 2) % 251);
}

TEST(Dataset, TruncatedArchiveIsAnError) {
    const auto root = temp_dir("cifar_trunc");
    std::filesystem::create_directories(root / "cifar-10-batches-bin");
    std::ofstream(root / "cifar-10-batches-bin" / "data_batch_1.bin", std::ios::binary) << "short";
    EXPECT_THROW(data::load_cifar10(root), Error);
}

TEST(Dataset, BalancedSubsetKeepsClassBalance) {
    data::SyntheticOptions o;
    o.train_per_class = 20;
    const auto pair = data::make_synthetic("synthetic5", o);
    const auto sub = data::balanced_subset(pair.train, 50);
    EXPECT_EQ(sub.size(), 50);
    for (auto [c, n] : sub.class_sizes()) EXPECT_EQ(n, 10) << c;
}

// ---- augmentation ----

TEST(Augment, WeakIdentityConfiguration) {
    const auto img = test_image();
    EXPECT_TRUE(same(data::weak_augment(img, 123, {0.0, 0}), img));
}

TEST(Augment, WeakIsDeterministicPerSeed) {
    const auto img = test_image();
    EXPECT_TRUE(same(data::weak_augment(img, 5), data::weak_augment(img, 5)));
}

TEST(Augment, WeakOutputsStayInPolicySupport) {
    // The weak policy has 2 flips x 9 x 9 crop offsets = 162 outcomes.
    const auto img = test_image(11);
    const data::Image src(img);
    std::vector<torch::Tensor> support;
    for (int flip = 0; flip < 2; ++flip)
        for (int oy = 0; oy <= 8; ++oy)
            for (int ox = 0; ox <= 8; ++ox) {
                const auto base = flip ? data::ops::hflip(src) : src;
                support.push_back(data::ops::padded_crop(base, 4, oy, ox).tensor());
            }
    auto outcome = [&](const torch::Tensor& out) {
        for (std::size_t k = 0; k < support.size(); ++k)
            if (torch::equal(out, support[k])) return static_cast<int>(k);
        return -1;
    };

    std::set<int> first100;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const int k = outcome(data::weak_augment(img, derive_seed(77, {s})));
        ASSERT_GE(k, 0) << "seed " << s << " produced an output outside the weak policy";
        first100.insert(k);
    }
    // Uniform sampling of 162 outcomes: E[distinct of 100] = 74.78, sd ~ 3.3.
    const double expected = oracle::expected_distinct(162, 100);
    EXPECT_NEAR(expected, 74.78, 0.01);
    EXPECT_GE(static_cast<double>(first100.size()), expected - 4 * 3.5);
    EXPECT_LE(first100.size(), 100u);

    std::set<int> reached = first100;
    for (std::uint64_t s = 100; s < 3000 && reached.size() < support.size(); ++s)
        reached.insert(outcome(data::weak_augment(img, derive_seed(77, {s}))));
    EXPECT_EQ(reached.size(), support.size());
}

TEST(Augment, StrongIdentityConfiguration) {
    const auto img = test_image();
    EXPECT_TRUE(same(data::strong_augment(img, 9, data::StrongParams::identity()), img));
}

TEST(Augment, StrongIsDeterministicPerSeed) {
    const auto img = test_image();
    EXPECT_TRUE(same(data::strong_augment(img, 17), data::strong_augment(img, 17)));
    EXPECT_FALSE(same(data::strong_augment(img, 17), data::strong_augment(img, 18)));
}

TEST(Augment, EraseFillsKnownRectangle) {
    data::Image img(test_image());
    const data::Rect r{3, 5, 7, 4};
    data::ops::erase(img, r, 0.25f);
    const auto t = img.tensor();
    using torch::indexing::Slice;
    const auto region = t.index({Slice(), Slice(3, 10), Slice(5, 9)});
    EXPECT_TRUE(torch::all(region == 0.25f).item<bool>());
    EXPECT_FALSE(torch::all(t == 0.25f).item<bool>());
}

TEST(Augment, StrongErasingUsesSampledRectangle) {
    auto p = data::StrongParams::identity();
    p.erase_prob = 1.0;
    p.erase_fill = -3.0f;  // outside the image range, so erased pixels are identifiable
    const auto img = test_image();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto out = data::strong_augment(img, seed, p);
        // replay the draw sequence: flip draw, (op, sign) per RandAugment op,
        // the erase_prob draw, then the rectangle
        Rng rng(seed);
        (void)uniform(rng);
        for (int k = 0; k < p.num_ops; ++k) {
            (void)uniform_index(rng, data::kRandOps.size());
            (void)uniform(rng);
        }
        (void)uniform(rng);
        const auto rect = data::sample_erase_rect(32, 32, p, rng);
        ASSERT_TRUE(rect.has_value());
        using torch::indexing::Slice;
        const auto mask = out == -3.0f;
        EXPECT_EQ(mask.sum().item<std::int64_t>(), 3 * rect->height * rect->width);
        EXPECT_TRUE(torch::all(out.index({Slice(), Slice(rect->top, rect->top + rect->height),
                                          Slice(rect->left, rect->left + rect->width)}) == -3.0f)
                        .item<bool>());
    }
}

TEST(Augment, StrongPerturbsMoreThanWeak) {
    data::SyntheticOptions o;
    o.train_per_class = 10;
    const auto ds = data::make_synthetic("synthetic10", o).train;
    double weak = 0, strong = 0;
    const int samples = 1000;
    for (int s = 0; s < samples; ++s) {
        const auto x = ds.image(s % ds.size());
        const auto seed = derive_seed(3, {static_cast<std::uint64_t>(s)});
        weak += (data::weak_augment(x, seed) - x).pow(2).mean().sqrt().item<double>();
        strong += (data::strong_augment(x, seed) - x).pow(2).mean().sqrt().item<double>();
    }
    EXPECT_GT(strong / samples, weak / samples);
}

TEST(Augment, PolicyDescriptions) {
    const auto weak = data::describe_policy(data::WeakParams{});
    ASSERT_EQ(weak.op_list.size(), 2u);
    EXPECT_EQ(weak.op_list[0].name, "horizontal_flip");
    EXPECT_DOUBLE_EQ(weak.op_list[0].lo, 0.5);
    EXPECT_EQ(weak.op_list[1].name, "reflect_pad_crop");
    const auto strong = data::describe_policy(data::StrongParams{});
    std::set<std::string> names;
    for (const auto& op : strong.op_list) names.insert(op.name.substr(0, op.name.find('(')));
    EXPECT_TRUE(names.count("randaugment"));
    EXPECT_TRUE(names.count("random_erasing"));
    EXPECT_TRUE(names.count("color_jitter"));
}

TEST(Augment, EveryRandOpIsANoOpAtZeroMagnitude) {
    const data::Image src(test_image());
    for (auto op : data::kRandOps) {
        auto img = src;
        data::ops::apply_rand_op(img, op, 0.0);
        EXPECT_EQ(img.pixels(), src.pixels()) << data::to_string(op);
    }
}

TEST(Augment, NormalizeUsesChannelStats) {
    auto x = torch::ones({2, 3, 2, 2});
    const auto y = data::normalize(x, {0.5, 0.0, 1.0}, {0.25, 2.0, 1.0});
    EXPECT_FLOAT_EQ(y[1][0][1][1].item<float>(), 2.0f);
    EXPECT_FLOAT_EQ(y[0][1][0][0].item<float>(), 0.5f);
    EXPECT_FLOAT_EQ(y[0][2][0][0].item<float>(), 0.0f);
    EXPECT_THROW(data::normalize(x, {0.5}, {0.25}), ContractError);
}

// ---- batches ----

namespace {

struct BatchFixture {
    data::Dataset ds;
    data::DatasetSplit split;

    explicit BatchFixture(double fraction = 0.2, std::int64_t per_class = 10) {
        data::SyntheticOptions o;
        o.train_per_class = per_class;
        ds = data::make_synthetic("synthetic10", o).train;
        split = data::make_split({"synthetic10", fraction, 1, true}, ds.labels);
    }

    data::BatchComposer composer(std::int64_t n_l, std::int64_t mu, int workers = 1) const {
        data::ComposeOptions opt;
        opt.n_l = n_l;
        opt.mu = mu;
        opt.seed = 1234;
        opt.workers = workers;
        return {ds, split, opt};
    }
};

}  // namespace

TEST(Batch, RatioArithmetic) {
    const BatchFixture f;
    const auto b = f.composer(2, 5).compose(0);
    EXPECT_EQ(b.n_l(), 2);
    EXPECT_EQ(b.n_u(), 10);
    EXPECT_EQ(b.unlabeled_images_strong.size(0), 10);
    EXPECT_EQ(b.labels.sizes(), (std::vector<std::int64_t>{2, 10}));
    const auto b7 = f.composer(1, 7).compose(3);
    EXPECT_EQ(b7.n_l(), 1);
    EXPECT_EQ(b7.n_u(), 7);
}

TEST(Batch, WeakAndStrongViewsShareTheSource) {
    BatchFixture f;
    data::ComposeOptions opt;
    opt.n_l = 2;
    opt.mu = 4;
    opt.weak = {0.0, 0};
    opt.strong = data::StrongParams::identity();
    const data::BatchComposer c(f.ds, f.split, opt);
    const auto b = c.compose(5);
    const auto mean = f.ds.info.mean, sd = f.ds.info.stddev;
    for (std::int64_t j = 0; j < b.n_u(); ++j) {
        const auto src = data::normalize(f.ds.image(b.unlabeled_indices[static_cast<std::size_t>(j)]), mean, sd);
        EXPECT_TRUE(torch::equal(b.unlabeled_images_weak[j], src));
        EXPECT_TRUE(torch::equal(b.unlabeled_images_strong[j], src));
    }
}

TEST(Batch, NoLabelLeakage) {
    const BatchFixture f;
    const auto b = f.composer(4, 3).compose(2);
    const std::set<std::int64_t> labeled(f.split.labeled_indices.begin(), f.split.labeled_indices.end());
    const std::set<std::int64_t> unlabeled(f.split.unlabeled_indices.begin(), f.split.unlabeled_indices.end());
    for (auto i : b.labeled_indices) EXPECT_TRUE(labeled.count(i));
    for (auto j : b.unlabeled_indices) EXPECT_TRUE(unlabeled.count(j));
    // the only label tensor covers the labeled rows
    EXPECT_EQ(b.labels.size(0), b.n_l());
    for (std::int64_t i = 0; i < b.n_l(); ++i)
        EXPECT_EQ(b.labels[i].argmax().item<int>(), f.ds.labels[static_cast<std::size_t>(b.labeled_indices[static_cast<std::size_t>(i)])]);
}

TEST(Batch, LabeledEpochVisitsEachExampleOnce) {
    const BatchFixture f;  // 20 labeled
    const auto c = f.composer(4, 1);
    ASSERT_EQ(c.steps_per_epoch(), 5);
    std::multiset<std::int64_t> seen;
    for (std::int64_t s = 0; s < c.steps_per_epoch(); ++s)
        for (auto i : c.compose(s, false).labeled_indices) seen.insert(i);
    EXPECT_EQ(seen, std::multiset<std::int64_t>(f.split.labeled_indices.begin(), f.split.labeled_indices.end()));
}

TEST(Batch, UnlabeledPoolWrapsInsteadOfFailing) {
    const BatchFixture f(0.5, 2);  // 10 labeled, 10 unlabeled
    const auto c = f.composer(2, 3);  // n_u = 6
    EXPECT_FALSE(c.compose(0).unlabeled_wrapped);
    const auto b1 = c.compose(1);  // positions 6..11 cross the pool boundary
    EXPECT_TRUE(b1.unlabeled_wrapped);
    EXPECT_EQ(b1.n_u(), 6);
    std::set<std::int64_t> first_cycle;
    for (std::int64_t s = 0; s < 2; ++s) {
        const auto b = c.compose(s);
        for (std::size_t j = 0; j < b.unlabeled_indices.size() && first_cycle.size() < 10; ++j)
            first_cycle.insert(b.unlabeled_indices[j]);
    }
    EXPECT_EQ(first_cycle.size(), 10u);
}

TEST(Batch, WorkerCountDoesNotChangeBatches) {
    const BatchFixture f;
    const auto a = f.composer(4, 3, 1).compose(7);
    const auto b = f.composer(4, 3, 3).compose(7);
    EXPECT_TRUE(torch::equal(a.labeled_images_strong, b.labeled_images_strong));
    EXPECT_TRUE(torch::equal(a.unlabeled_images_weak, b.unlabeled_images_weak));
    EXPECT_TRUE(torch::equal(a.unlabeled_images_strong, b.unlabeled_images_strong));
    EXPECT_EQ(a.unlabeled_indices, b.unlabeled_indices);
}

TEST(Batch, BatchIsAFunctionOfSeedAndStep) {
    const BatchFixture f;
    const auto c1 = f.composer(4, 2);
    const auto late = c1.compose(11);
    const auto c2 = f.composer(4, 2);
    const auto again = c2.compose(11);
    EXPECT_TRUE(torch::equal(late.unlabeled_images_strong, again.unlabeled_images_strong));
    EXPECT_EQ(late.labeled_indices, again.labeled_indices);
}
