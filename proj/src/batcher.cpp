#include "auginv/batcher.hpp"

#include <algorithm>
#include <numeric>

#include "auginv/errors.hpp"
#include "auginv/util.hpp"

namespace auginv {

SeedRing::SeedRing(std::int64_t num_seeds, RngStream rng) : rng_(rng) {
    if (num_seeds < 1) throw ContractError("SeedRing: need at least one seed");
    order_.resize(static_cast<size_t>(num_seeds));
    std::iota(order_.begin(), order_.end(), std::int64_t{0});
    reshuffle();
}

void SeedRing::reshuffle() {
    // Fisher-Yates on the ring's own stream.
    for (size_t i = order_.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng_.below(i));
        std::swap(order_[i - 1], order_[j]);
    }
    pos_ = 0;
}

std::int64_t SeedRing::next_excluding(const std::vector<std::int64_t>& exclude) {
    if (pos_ == order_.size()) reshuffle();
    // Duplicates can only appear when the ring wrapped mid-plan; skip them by
    // probing forward and swap the pick into the current slot, so skipped
    // seeds stay in the unconsumed tail instead of being dropped.
    for (size_t probe = pos_; probe < order_.size(); ++probe) {
        std::int64_t candidate = order_[probe];
        if (std::find(exclude.begin(), exclude.end(), candidate) != exclude.end()) continue;
        std::swap(order_[probe], order_[pos_]);
        return order_[pos_++];
    }
    throw ContractError("SeedRing: no available seed (plan too large for the population)");
}

std::vector<BatchPlan> build_epoch_plans(SeedRing& ring, std::int64_t train_size, int batch_size, int m_copies,
                                         bool invariance_mode) {
    if (!invariance_mode && m_copies != 1)
        throw ContractError("build_epoch_plans: baseline mode requires M = 1");
    if (m_copies < 1 || batch_size < 1) throw ContractError("build_epoch_plans: invalid batch geometry");
    if (m_copies > batch_size) throw ContractError("build_epoch_plans: M exceeds the batch size");
    if (batch_size % m_copies != 0) throw ContractError("build_epoch_plans: batch size not divisible by M");
    if (batch_size > train_size) throw ContractError("build_epoch_plans: batch size exceeds the train size");
    if (ring.num_seeds() != train_size) throw ContractError("build_epoch_plans: ring size mismatch");

    const std::int64_t plans_per_epoch = train_size / batch_size;
    const int seeds_per_plan = batch_size / m_copies;
    std::vector<BatchPlan> plans;
    plans.reserve(static_cast<size_t>(plans_per_epoch));
    for (std::int64_t p = 0; p < plans_per_epoch; ++p) {
        BatchPlan plan;
        plan.m_copies = m_copies;
        plan.seed_ids.reserve(static_cast<size_t>(seeds_per_plan));
        for (int s = 0; s < seeds_per_plan; ++s) plan.seed_ids.push_back(ring.next_excluding(plan.seed_ids));
        plans.push_back(std::move(plan));
    }
    return plans;
}

void materialize_batch(const BatchPlan& plan, const CifarSplit& split, const ChannelStats& stats,
                       const AugmentScheme& scheme, RngStream& rng, float* images, int* labels) {
    float source[kImagePixels];
    for (size_t g = 0; g < plan.seed_ids.size(); ++g) {
        const std::int64_t idx = split.index_of_seed(plan.seed_ids[g]);
        split.copy_pixels(idx, source);
        const int label = split.label(idx);
        for (int m = 0; m < plan.m_copies; ++m) {
            const int row = static_cast<int>(g) * plan.m_copies + m;
            float* dst = images + static_cast<std::int64_t>(row) * kImagePixels;
            AugmentParams params = sample_train_params(rng, scheme);
            apply_augmentation(source, dst, kImageChannels, kImageHeight, kImageWidth, params);
            normalize_image(dst, stats);
            labels[row] = label;
        }
    }
}

}  // namespace auginv
