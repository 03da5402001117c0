#include "auginv/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "auginv/errors.hpp"
#include "auginv/util.hpp"

namespace auginv {

namespace {
constexpr char kCacheMagic[] = "AUGINV-CIFAR-CACHE";
constexpr std::uint32_t kCacheVersion = 1;

void put_u64(std::ofstream& out, std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::ifstream& in) {
    std::uint8_t b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("cache file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
}  // namespace

void CifarSplit::copy_pixels(std::int64_t i, float* dst) const {
    const std::uint8_t* src = pixels_.data() + static_cast<size_t>(i) * kImagePixels;
    for (int k = 0; k < kImagePixels; ++k) dst[k] = static_cast<float>(src[k]) * (1.0f / 255.0f);
}

std::int64_t CifarSplit::index_of_seed(std::int64_t seed) const {
    // seed ids are assigned by position by the parser; handle re-bases too.
    if (!seed_ids_.empty()) {
        std::int64_t guess = seed - seed_ids_.front();
        if (guess >= 0 && guess < size() && seed_ids_[static_cast<size_t>(guess)] == seed) return guess;
    }
    for (std::int64_t i = 0; i < size(); ++i)
        if (seed_ids_[static_cast<size_t>(i)] == seed) return i;
    throw DataError(strf("unknown seed_id %lld", static_cast<long long>(seed)));
}

void CifarSplit::append_record(std::int64_t seed, int label, std::span<const std::uint8_t> pixels) {
    if (label < 0 || label >= kNumClasses)
        throw DataError(strf("corrupt record: label byte %d out of range", label));
    if (pixels.size() != kImagePixels) throw ContractError("append_record: pixel span must be 3072 bytes");
    seed_ids_.push_back(seed);
    labels_.push_back(static_cast<std::uint8_t>(label));
    pixels_.insert(pixels_.end(), pixels.begin(), pixels.end());
}

CifarSplit parse_cifar10_binary(std::span<const std::uint8_t> bytes, std::int64_t seed_id_base) {
    if (bytes.size() % kRecordBytes != 0)
        throw DataError(strf("malformed file: %zu bytes is not a multiple of %d", bytes.size(), kRecordBytes));
    CifarSplit split;
    std::int64_t n = static_cast<std::int64_t>(bytes.size()) / kRecordBytes;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + static_cast<size_t>(i) * kRecordBytes;
        split.append_record(seed_id_base + i, rec[0], {rec + 1, kImagePixels});
    }
    return split;
}

ChannelStats compute_channel_stats(const CifarSplit& train) {
    if (train.size() == 0) throw DataError("compute_channel_stats: empty split");
    constexpr int kPlane = kImageHeight * kImageWidth;
    std::array<double, kImageChannels> sum{}, sumsq{};
    for (std::int64_t i = 0; i < train.size(); ++i) {
        auto px = train.raw_pixels(i);
        for (int c = 0; c < kImageChannels; ++c) {
            double s = 0.0, s2 = 0.0;
            for (int k = 0; k < kPlane; ++k) {
                double v = static_cast<double>(px[static_cast<size_t>(c * kPlane + k)]) / 255.0;
                s += v;
                s2 += v * v;
            }
            sum[c] += s;
            sumsq[c] += s2;
        }
    }
    ChannelStats stats;
    double count = static_cast<double>(train.size()) * kPlane;
    for (int c = 0; c < kImageChannels; ++c) {
        stats.mean[c] = sum[c] / count;
        double var = sumsq[c] / count - stats.mean[c] * stats.mean[c];
        stats.stddev[c] = std::sqrt(std::max(var, 0.0));
        if (stats.stddev[c] <= 0.0)
            throw DataError(strf("degenerate data: channel %d has zero variance", c));
    }
    return stats;
}

void normalize_image(float* chw, const ChannelStats& stats) {
    constexpr int kPlane = kImageHeight * kImageWidth;
    for (int c = 0; c < kImageChannels; ++c) {
        float mean = static_cast<float>(stats.mean[c]);
        float inv_std = static_cast<float>(1.0 / stats.stddev[c]);
        float* p = chw + c * kPlane;
        for (int k = 0; k < kPlane; ++k) p[k] = (p[k] - mean) * inv_std;
    }
}

Dataset load_cifar10(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir)) throw DataError("dataset directory not found: " + dir.string());
    Dataset ds;
    std::int64_t base = 0;
    for (int f = 1; f <= 5; ++f) {
        auto path = dir / strf("data_batch_%d.bin", f);
        auto bytes = read_binary_file(path);
        CifarSplit part = parse_cifar10_binary(bytes, base);
        for (std::int64_t i = 0; i < part.size(); ++i)
            ds.train.append_record(part.seed_id(i), part.label(i), part.raw_pixels(i));
        base += part.size();
    }
    ds.test = parse_cifar10_binary(read_binary_file(dir / "test_batch.bin"), 0);
    if (ds.train.size() != 50000)
        throw DataError(strf("train split has %lld records, expected 50000", static_cast<long long>(ds.train.size())));
    if (ds.test.size() != 10000)
        throw DataError(strf("test split has %lld records, expected 10000", static_cast<long long>(ds.test.size())));
    ds.stats = compute_channel_stats(ds.train);
    return ds;
}

namespace {
void write_split(std::ofstream& out, const CifarSplit& s) {
    put_u64(out, static_cast<std::uint64_t>(s.size()));
    for (std::int64_t i = 0; i < s.size(); ++i) {
        std::uint8_t label = static_cast<std::uint8_t>(s.label(i));
        out.write(reinterpret_cast<const char*>(&label), 1);
        auto px = s.raw_pixels(i);
        out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    }
}

CifarSplit read_split(std::ifstream& in) {
    std::uint64_t n = get_u64(in);
    CifarSplit s;
    std::vector<std::uint8_t> rec(kRecordBytes);
    for (std::uint64_t i = 0; i < n; ++i) {
        if (!in.read(reinterpret_cast<char*>(rec.data()), kRecordBytes)) throw DataError("cache file truncated");
        s.append_record(static_cast<std::int64_t>(i), rec[0], {rec.data() + 1, kImagePixels});
    }
    return s;
}
}  // namespace

void save_dataset_cache(const Dataset& ds, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DataError("cannot open cache file for writing: " + file.string());
    out.write(kCacheMagic, sizeof(kCacheMagic) - 1);
    put_u64(out, kCacheVersion);
    write_split(out, ds.train);
    write_split(out, ds.test);
    if (!out) throw DataError("cache write failed: " + file.string());
}

Dataset load_dataset_cache(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open cache file: " + file.string());
    char magic[sizeof(kCacheMagic) - 1];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0)
        throw DataError("not a dataset cache file: " + file.string());
    std::uint64_t version = get_u64(in);
    if (version != kCacheVersion) throw DataError(strf("unsupported cache version %llu", (unsigned long long)version));
    Dataset ds;
    ds.train = read_split(in);
    ds.test = read_split(in);
    ds.stats = compute_channel_stats(ds.train);
    return ds;
}

}  // namespace auginv
