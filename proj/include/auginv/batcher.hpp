#pragma once

#include <cstdint>
#include <vector>

#include "auginv/augment.hpp"
#include "auginv/dataset.hpp"
#include "auginv/objective.hpp"
#include "auginv/rng.hpp"

namespace auginv {

// Which seeds one batch is built from: rows [i*M, (i+1)*M) are M augmented
// copies of seed_ids[i].
struct BatchPlan {
    std::vector<std::int64_t> seed_ids;
    int m_copies = 1;

    int batch_size() const { return static_cast<int>(seed_ids.size()) * m_copies; }
    GroupIndex groups() const { return GroupIndex::contiguous(batch_size(), m_copies); }
};

// Persistent shuffled ring over all N seeds. Epochs draw from the ring
// without replacement; when the ring is exhausted it reshuffles, so leftover
// seeds roll into the next epoch instead of being dropped. With M in-batch
// copies an epoch touches N/M distinct seeds and every seed is visited once
// per M consecutive epochs (up to ring-boundary remainders).
class SeedRing {
public:
    SeedRing(std::int64_t num_seeds, RngStream rng);
    std::int64_t num_seeds() const { return static_cast<std::int64_t>(order_.size()); }

    // Next seed that is not in `exclude` (the seeds already placed in the
    // plan being built); deferred seeds keep their ring position.
    std::int64_t next_excluding(const std::vector<std::int64_t>& exclude);

private:
    void reshuffle();
    std::vector<std::int64_t> order_;
    std::size_t pos_ = 0;
    RngStream rng_;
};

// Exactly floor(N/B) plans per epoch in both modes, keeping the number of
// optimizer steps equal to the baseline's. invariance_mode=false forces
// M = 1 (standard augmentation batches).
std::vector<BatchPlan> build_epoch_plans(SeedRing& ring, std::int64_t train_size, int batch_size, int m_copies,
                                         bool invariance_mode);

// Fills images (batch x 3 x 32 x 32) and labels: per seed, M independent
// train-scheme draws applied to the same source image, then per-channel
// normalization. Rows are group-contiguous.
void materialize_batch(const BatchPlan& plan, const CifarSplit& split, const ChannelStats& stats,
                       const AugmentScheme& scheme, RngStream& rng, float* images, int* labels);

}  // namespace auginv
