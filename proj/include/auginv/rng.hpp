#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace auginv {

// splitmix64 finalizer; used to mix path components into derived seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stream tags for derived seeds. Every consumer owns a distinct tag so that
// adding draws in one place never shifts another stream.
namespace stream {
constexpr std::uint64_t kInit = 1;      // weight initialization (per layer)
constexpr std::uint64_t kPlans = 2;     // epoch plan shuffling (ring)
constexpr std::uint64_t kAugment = 3;   // per-batch training augmentation
constexpr std::uint64_t kMonitor = 4;   // baseline-mode monitoring batches
constexpr std::uint64_t kEval = 5;      // per-image evaluation transforms/references
constexpr std::uint64_t kSynth = 6;     // synthetic dataset generation
}  // namespace stream

// Deterministic random stream. All distributions are implemented on top of
// the raw 64-bit output so results are identical across platforms and
// standard libraries (std::*_distribution is implementation-defined).
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    // Derives an independent stream from a base seed and a path of integers,
    // e.g. derive(base, {stream::kAugment, epoch, batch_index}).
    static RngStream derive(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
        std::uint64_t s = mix64(base);
        for (std::uint64_t v : path) s = mix64(s ^ mix64(v));
        return RngStream(s);
    }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Consumes exactly one draw regardless of p.
    bool bernoulli(double p) { return uniform01() < p; }

    // Standard normal via Box-Muller; consumes exactly two draws.
    double normal() {
        double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n); n >= 1. Rejection-free modulo is acceptable
    // here (n is tiny relative to 2^64; bias < 2^-40 for n < 2^24).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    std::mt19937_64 gen_;
};

}  // namespace auginv
