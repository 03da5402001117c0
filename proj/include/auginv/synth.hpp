#pragma once

#include <cstdint>
#include <filesystem>

#include "auginv/dataset.hpp"

namespace auginv {

// Synthetic stand-in data in the exact CIFAR-10 record format, for
// environments without the real dataset and for hermetic tests. Ten balanced
// classes, each a smooth random field observed under a random affine view,
// plus a per-sample identity texture and pixel noise, so the classes are
// learnable while individual samples keep transformation-sensitive detail.
//
// `stream_offset` decouples the random streams of different splits built
// from the same seed.
CifarSplit make_synthetic_split(std::int64_t count, std::uint64_t seed, std::uint64_t stream_offset = 0);

// Writes the official 6-file layout (5 train files of 10,000 records plus
// test_batch.bin) into `dir`, loadable with load_cifar10().
void write_synthetic_cifar10(const std::filesystem::path& dir, std::uint64_t seed);

}  // namespace auginv
