#pragma once

// Shared doctest fixtures: unique temp directories, an in-memory synthetic
// dataset, and a lazily generated on-disk dataset for CLI-level tests.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "auginv/dataset.hpp"
#include "auginv/synth.hpp"

namespace testsupport {

inline std::filesystem::path unique_temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("auginv-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir;
}

// Small in-memory dataset for trainer/evaluator tests.
inline auginv::Dataset small_dataset(std::int64_t train_n = 640, std::int64_t test_n = 320,
                                     std::uint64_t seed = 11) {
    auginv::Dataset ds;
    ds.train = auginv::make_synthetic_split(train_n, seed, 0);
    ds.test = auginv::make_synthetic_split(test_n, seed, 1u << 20);
    ds.stats = auginv::compute_channel_stats(ds.train);
    return ds;
}

// Full-size on-disk dataset in the official layout (the loader enforces
// 50k/10k); generated once per test-binary run.
inline const std::filesystem::path& shared_data_dir() {
    static const std::filesystem::path dir = [] {
        if (const char* real = std::getenv("AUGINV_CIFAR10_DIR"); real != nullptr && *real != '\0')
            return std::filesystem::path(real);
        auto d = unique_temp_dir("data");
        auginv::write_synthetic_cifar10(d, 7);
        return d;
    }();
    return dir;
}

}  // namespace testsupport
