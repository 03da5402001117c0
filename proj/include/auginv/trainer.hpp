#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "auginv/augment.hpp"
#include "auginv/dataset.hpp"
#include "auginv/network.hpp"
#include "auginv/objective.hpp"

namespace auginv {

struct TrainConfig {
    int epochs = 350;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::vector<int> lr_milestones = {200, 250, 300};  // epoch indices where lr drops
    double lr_decay = 0.1;
    int batch_size = 128;
    int m_copies = 4;  // in-batch copies per seed (invariance mode; monitoring group size otherwise)
    double alpha = 0.1;
    int inv_layers = 9;  // L; taps conv1..convL carry the invariance terms
    bool invariance_mode = true;
    InvarianceVariant variant = InvarianceVariant::kVerbatim;
    std::uint64_t base_seed = 1;
    AugmentScheme scheme;
    int threads = 0;
    std::int64_t train_subset = 0;  // 0 = full split; else the first N seeds
    double width_mult = 1.0;
    bool monitor_invariance = true;  // baseline mode: log Eq-ratio losses without optimizing them
    int monitor_every = 1;           // monitor every k-th step
    int checkpoint_every = 0;        // epochs between checkpoints; 0 = final only
    double grad_clip = 0.0;          // global L2 norm; 0 = off

    void validate() const;  // throws ConfigError
};

struct EpochLog {
    int epoch = 0;
    double learning_rate = 0.0;
    double cross_entropy = 0.0;
    double train_accuracy = 0.0;
    std::vector<double> inv_loss;  // mean per tapped layer; NaN when never computed
    std::int64_t degenerate_skips = 0;
    double seconds = 0.0;
};

struct TrainResult {
    Architecture arch;
    ModelParams params;
    std::vector<EpochLog> logs;
};

// Streams the per-epoch artifacts of one run: metrics.csv (deterministic
// EpochLog columns), timing.csv (wall-clock seconds, kept separate so
// metrics.csv is bit-identical across reruns), and checkpoints.
class RunWriter {
public:
    RunWriter(std::filesystem::path run_dir, int inv_layers);
    void append(const EpochLog& log);
    void save_model(const Architecture& arch, const ModelParams& params, const std::string& filename);
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    int inv_layers_;
    std::ofstream metrics_, timing_;
};

// SGD with momentum over Eq-4 (invariance mode) or plain cross-entropy
// (baseline mode, taps detached). Single-writer over the parameters;
// bit-reproducible for a fixed config.
TrainResult train(const TrainConfig& config, const Dataset& data, RunWriter* writer = nullptr);

// Median per-step wall-time ratio (invariance mode / baseline) on identical
// geometry, monitoring disabled in both modes. n_steps >= 20.
double measure_overhead(const TrainConfig& config, const Dataset& data, int n_steps);

}  // namespace auginv
