#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace auginv {

inline constexpr int kImageChannels = 3;
inline constexpr int kImageHeight = 32;
inline constexpr int kImageWidth = 32;
inline constexpr int kImagePixels = kImageChannels * kImageHeight * kImageWidth;  // 3072
inline constexpr int kRecordBytes = 1 + kImagePixels;                             // 3073
inline constexpr int kNumClasses = 10;

// Per-channel mean / population standard deviation over the train split,
// in [0,1] pixel units.
struct ChannelStats {
    std::array<double, kImageChannels> mean{};
    std::array<double, kImageChannels> stddev{};
};

// One split of labeled 32x32x3 images. Pixels are stored as the raw bytes of
// the CIFAR-10 binary records (channel-planar, row-major) and exposed as
// floats in [0,1]; seed ids are stable global indices assigned at parse time.
class CifarSplit {
public:
    CifarSplit() = default;

    std::int64_t size() const { return static_cast<std::int64_t>(labels_.size()); }
    int label(std::int64_t i) const { return labels_[static_cast<size_t>(i)]; }
    std::int64_t seed_id(std::int64_t i) const { return seed_ids_[static_cast<size_t>(i)]; }

    // Raw pixel bytes of one image (3072 bytes, R plane then G then B).
    std::span<const std::uint8_t> raw_pixels(std::int64_t i) const {
        return {pixels_.data() + static_cast<size_t>(i) * kImagePixels, kImagePixels};
    }

    // Writes the image as floats in [0,1] (byte / 255) into dst[0..3071].
    void copy_pixels(std::int64_t i, float* dst) const;

    // Index of the record whose seed_id equals `seed` (seed ids are unique
    // within a split). Throws DataError for unknown ids.
    std::int64_t index_of_seed(std::int64_t seed) const;

    void append_record(std::int64_t seed, int label, std::span<const std::uint8_t> pixels);

private:
    std::vector<std::uint8_t> labels_;
    std::vector<std::uint8_t> pixels_;  // size() * 3072
    std::vector<std::int64_t> seed_ids_;
};

struct Dataset {
    CifarSplit train;
    CifarSplit test;
    ChannelStats stats;
};

// Parses CIFAR-10 binary (C-array) records: 1 label byte + 3072 pixel bytes
// per record. seed ids are assigned as seed_id_base + position.
// Throws DataError if the length is not a multiple of 3073 or a label byte
// exceeds 9.
CifarSplit parse_cifar10_binary(std::span<const std::uint8_t> bytes, std::int64_t seed_id_base = 0);

// Per-channel mean and population std over every pixel of the split.
// Throws DataError on an empty split or a zero-variance channel.
ChannelStats compute_channel_stats(const CifarSplit& train);

// (v - mean) / std per channel, in place. Applied after augmentation; the
// augmentation pipeline operates in [0,1] space.
void normalize_image(float* chw, const ChannelStats& stats);

// Loads the official 6-file layout (data_batch_1..5.bin + test_batch.bin)
// from `dir` and computes train channel stats. Enforces 50,000/10,000 record
// counts. seed ids run 0..49999 over the concatenated train files and
// 0..9999 over the test file.
Dataset load_cifar10(const std::filesystem::path& dir);

// Internal cache: one file, magic/version/count header + raw records.
// Round-trips bit-exactly.
void save_dataset_cache(const Dataset& ds, const std::filesystem::path& file);
Dataset load_dataset_cache(const std::filesystem::path& file);

}  // namespace auginv
