#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

#include "semiformer/data/augment.hpp"
#include "semiformer/data/dataset.hpp"
#include "semiformer/data/split.hpp"
#include "semiformer/errors.hpp"
#include "semiformer/rng.hpp"

namespace semiformer::data {

/// One optimisation step's inputs. Carries no ground truth for unlabeled
/// examples; `unlabeled_indices` exist only so diagnostics can look labels
/// up through DatasetSplit::hidden_label.
struct MixedBatch {
    torch::Tensor labeled_images_strong;    // (n_l, C, H, W), normalized
    torch::Tensor labels;                   // (n_l, K) one-hot
    torch::Tensor unlabeled_images_weak;    // (n_u, C, H, W), normalized
    torch::Tensor unlabeled_images_strong;  // (n_u, C, H, W), normalized
    std::vector<std::int64_t> labeled_indices;
    std::vector<std::int64_t> unlabeled_indices;
    bool labeled_wrapped = false;    // a labeled cycle ended inside this batch
    bool unlabeled_wrapped = false;  // the unlabeled pool was re-shuffled inside this batch

    std::int64_t n_l() const { return labeled_images_strong.defined() ? labeled_images_strong.size(0) : 0; }
    std::int64_t n_u() const { return unlabeled_images_weak.defined() ? unlabeled_images_weak.size(0) : 0; }
};

struct ComposeOptions {
    std::int64_t n_l = 16;
    std::int64_t mu = 5;
    WeakParams weak{};
    StrongParams strong{};
    std::vector<double> mean;    // empty: dataset defaults
    std::vector<double> stddev;  // empty: dataset defaults
    std::uint64_t seed = 0;
    int workers = 1;
};

/// Cycle-based sampler over an index pool: position p of the infinite stream
/// is element (p mod N) of the permutation for cycle p / N. Stateless, so a
/// batch is a pure function of (seed, step).
class CyclicSampler {
public:
    CyclicSampler(std::vector<std::int64_t> pool, std::uint64_t seed, std::uint64_t tag)
        : pool_(std::move(pool)), seed_(seed), tag_(tag) {}

    std::size_t pool_size() const { return pool_.size(); }

    std::int64_t at(std::int64_t position) const {
        const auto n = static_cast<std::int64_t>(pool_.size());
        const auto cycle = position / n;
        if (cycle != cached_cycle_) {
            perm_ = pool_;
            Rng rng(derive_seed(seed_, {tag_, static_cast<std::uint64_t>(cycle)}));
            shuffle(perm_, rng);
            cached_cycle_ = cycle;
        }
        return perm_[static_cast<std::size_t>(position % n)];
    }

    /// True when [begin, begin + count) crosses a cycle boundary.
    bool wraps(std::int64_t begin, std::int64_t count) const {
        const auto n = static_cast<std::int64_t>(pool_.size());
        return count > 0 && (begin / n != (begin + count - 1) / n || (begin + count) % n == 0);
    }

private:
    std::vector<std::int64_t> pool_;
    std::uint64_t seed_;
    std::uint64_t tag_;
    mutable std::int64_t cached_cycle_ = -1;
    mutable std::vector<std::int64_t> perm_;
};

class BatchComposer {
public:
    static constexpr std::uint64_t kLabeledTag = 0x1ab;
    static constexpr std::uint64_t kUnlabeledTag = 0x2ab;
    static constexpr std::uint64_t kWeakView = 1;
    static constexpr std::uint64_t kStrongView = 2;
    static constexpr std::uint64_t kLabeledView = 3;

    BatchComposer(const Dataset& train, const DatasetSplit& split, ComposeOptions opt)
        : train_(&train),
          opt_(std::move(opt)),
          labeled_(split.labeled_indices, opt_.seed, kLabeledTag),
          unlabeled_(split.unlabeled_indices, opt_.seed, kUnlabeledTag) {
        if (opt_.n_l < 1) throw ContractError("n_l must be >= 1");
        if (opt_.mu < 0) throw ContractError("mu must be >= 0");
        if (split.labeled_indices.empty()) throw ContractError("split has no labeled examples");
        if (opt_.mean.empty()) opt_.mean = train.info.mean;
        if (opt_.stddev.empty()) opt_.stddev = train.info.stddev;
    }

    const ComposeOptions& options() const { return opt_; }

    /// Steps needed to visit every labeled example once.
    std::int64_t steps_per_epoch() const {
        const auto n = static_cast<std::int64_t>(labeled_.pool_size());
        return (n + opt_.n_l - 1) / opt_.n_l;
    }

    /// Batch for `step`. With `with_unlabeled` false the unlabeled views are
    /// left undefined (supervised phases skip the augmentation cost).
    MixedBatch compose(std::int64_t step, bool with_unlabeled = true) const {
        const std::uint64_t step_seed = derive_seed(opt_.seed, {static_cast<std::uint64_t>(step)});
        MixedBatch b;
        const auto n_l = opt_.n_l;
        const auto l_begin = step * n_l;
        for (std::int64_t i = 0; i < n_l; ++i) b.labeled_indices.push_back(labeled_.at(l_begin + i));
        b.labeled_wrapped = labeled_.wraps(l_begin, n_l);

        std::vector<torch::Tensor> lab(static_cast<std::size_t>(n_l));
        run_parallel(n_l, [&](std::int64_t i) {
            lab[static_cast<std::size_t>(i)] = strong_augment(
                train_->image(b.labeled_indices[static_cast<std::size_t>(i)]),
                derive_seed(step_seed, {kLabeledView, static_cast<std::uint64_t>(i)}), opt_.strong);
        });
        b.labeled_images_strong = normalize(torch::stack(lab), opt_.mean, opt_.stddev);
        auto y = torch::zeros({n_l, train_->num_classes()}, torch::kFloat32);
        for (std::int64_t i = 0; i < n_l; ++i)
            y[i][train_->labels[static_cast<std::size_t>(b.labeled_indices[static_cast<std::size_t>(i)])]] = 1.0f;
        b.labels = y;

        const auto n_u = opt_.mu * n_l;
        if (!with_unlabeled || n_u == 0) return b;
        if (unlabeled_.pool_size() == 0) throw ContractError("split has no unlabeled examples but mu > 0");
        const auto u_begin = step * n_u;
        for (std::int64_t j = 0; j < n_u; ++j) b.unlabeled_indices.push_back(unlabeled_.at(u_begin + j));
        b.unlabeled_wrapped = unlabeled_.wraps(u_begin, n_u);

        std::vector<torch::Tensor> weak(static_cast<std::size_t>(n_u)), strong(static_cast<std::size_t>(n_u));
        run_parallel(n_u, [&](std::int64_t j) {
            const auto src = train_->image(b.unlabeled_indices[static_cast<std::size_t>(j)]);
            const auto pos = static_cast<std::uint64_t>(j);
            weak[static_cast<std::size_t>(j)] = weak_augment(src, derive_seed(step_seed, {kWeakView, pos}), opt_.weak);
            strong[static_cast<std::size_t>(j)] =
                strong_augment(src, derive_seed(step_seed, {kStrongView, pos}), opt_.strong);
        });
        b.unlabeled_images_weak = normalize(torch::stack(weak), opt_.mean, opt_.stddev);
        b.unlabeled_images_strong = normalize(torch::stack(strong), opt_.mean, opt_.stddev);
        return b;
    }

private:
    /// Seeds depend on (step, view, position) only, so the worker count never
    /// changes the result.
    template <class F>
    void run_parallel(std::int64_t n, F&& f) const {
        const int workers = std::max(1, std::min<int>(opt_.workers, static_cast<int>(n)));
        if (workers == 1) {
            for (std::int64_t i = 0; i < n; ++i) f(i);
            return;
        }
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::int64_t i = w; i < n; i += workers) f(i);
            });
    }

    const Dataset* train_;
    ComposeOptions opt_;
    CyclicSampler labeled_;
    CyclicSampler unlabeled_;
};

}  // namespace semiformer::data
