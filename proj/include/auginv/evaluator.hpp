#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "auginv/augment.hpp"
#include "auginv/dataset.hpp"
#include "auginv/network.hpp"

namespace auginv {

struct EvalConfig {
    int transforms = 5;   // evaluation transform draws per image (T)
    int references = 200; // reference images per test image (R)
    std::uint64_t seed = 1;
    std::int64_t test_subset = 0;  // 0 = full split; else the first N images
    int batch = 128;               // forward batch size
    int threads = 0;
    AugmentScheme scheme;
};

struct LayerSummary {
    int layer = 0;          // 0 = normalized pixel space, 1..9 = conv taps
    double median = 0.0;    // over all (image, transform) scores
    double q1 = 0.0, q3 = 0.0;
    double median_pooled = 0.0;  // over per-image means of the T scores
};

// Per-layer invariance-score distributions over the test set. Raw scores are
// retained (not just summaries) so distribution plots can be regenerated
// under either pooling.
struct InvarianceReport {
    int transforms = 0, references = 0;
    std::uint64_t seed = 0;
    std::int64_t images = 0;
    std::vector<int> layers;                  // 0..L
    std::vector<std::vector<float>> sigma;    // sigma[layer][image * T + t]
    std::vector<LayerSummary> summaries;
};

// 1 - d(f_x, f_gx) / mean(reference_dists). Takes its maximum value 1 when
// the two activation vectors are identical. Throws DegenerateFeaturesError
// when the mean reference distance is not positive, ContractError when
// reference_dists is empty.
double invariance_score(std::span<const float> f_x, std::span<const float> f_gx,
                        std::span<const double> reference_dists);

// For each test image: T evaluation-extreme transform draws and a fixed
// per-image random reference subset of R other images; scores per
// (image, transform, layer) with layer 0 measured on normalized pixels.
// Per-image streams derive from (seed, image index), so results do not
// depend on scheduling.
InvarianceReport evaluate_invariance(const Network<float>& net, const CifarSplit& test, const ChannelStats& stats,
                                     const EvalConfig& cfg);

// Top-1 accuracy, no test-time augmentation.
double evaluate_accuracy(const Network<float>& net, const CifarSplit& test, const ChannelStats& stats,
                         int batch = 256, std::int64_t subset = 0);

// invariance.csv: "layer,image_id,transform_index,sigma" rows (sigma to 6
// significant digits), then '#'-prefixed meta and per-layer summary lines.
void write_invariance_csv(const InvarianceReport& report, const std::filesystem::path& file);
InvarianceReport read_invariance_csv(const std::filesystem::path& file);

// Linear-interpolation quantile (the numpy default); shared by the report
// command so recomputations agree to rounding.
double quantile(std::vector<double> values, double p);

}  // namespace auginv
