#include "auginv/synth.hpp"

#include <omp.h>

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <vector>

#include "auginv/errors.hpp"
#include "auginv/rng.hpp"
#include "auginv/util.hpp"

namespace auginv {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Sinusoid {
    double fx, fy, phase;
};

// A class mixes two private low-frequency sinusoids with two waves drawn
// from a pool shared across classes, so classes overlap in structure and the
// task is not solvable from color statistics alone.
struct ClassField {
    std::array<Sinusoid, 4> waves;
    std::array<std::array<double, 4>, 3> mix;  // [channel][wave]
    std::array<double, 3> bias;
};

ClassField make_class_field(std::uint64_t seed, int label) {
    RngStream pool_rng = RngStream::derive(seed, {stream::kSynth, 99});
    std::array<Sinusoid, 6> pool;
    for (Sinusoid& w : pool)
        w = {pool_rng.uniform(-2.0, 2.0), pool_rng.uniform(-2.0, 2.0), pool_rng.uniform(0.0, kTwoPi)};

    RngStream rng = RngStream::derive(seed, {stream::kSynth, 100, static_cast<std::uint64_t>(label)});
    ClassField f;
    f.waves[0] = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(0.0, kTwoPi)};
    f.waves[1] = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(0.0, kTwoPi)};
    f.waves[2] = pool[rng.below(pool.size())];
    f.waves[3] = pool[rng.below(pool.size())];
    for (auto& row : f.mix)
        for (double& m : row) m = rng.uniform(-1.0, 1.0);
    for (double& b : f.bias) b = rng.uniform(-0.06, 0.06);
    return f;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

void render_sample(const ClassField& field, RngStream& rng, std::uint8_t* out) {
    // Random view of the class field: the field is analytic, so the view is
    // evaluated exactly at affinely transformed coordinates.
    const double rot = rng.uniform(-35.0, 35.0) * std::numbers::pi / 180.0;
    const double scale = rng.uniform(0.7, 1.35);
    const double shear = std::tan(rng.uniform(-15.0, 15.0) * std::numbers::pi / 180.0);
    const double tx = rng.uniform(-0.3, 0.3), ty = rng.uniform(-0.3, 0.3);
    const double a00 = scale * std::cos(rot), a01 = scale * (std::cos(rot) * shear - std::sin(rot));
    const double a10 = scale * std::sin(rot), a11 = scale * (std::sin(rot) * shear + std::cos(rot));

    // Identity texture: higher-frequency detail unique to the sample,
    // evaluated in the untransformed frame; deliberately strong relative to
    // the class signal so per-sample detail survives training pressure.
    Sinusoid tex[2];
    for (Sinusoid& t : tex) {
        double freq = rng.uniform(5.0, 10.0), angle = rng.uniform(0.0, kTwoPi);
        t = {freq * std::cos(angle), freq * std::sin(angle), rng.uniform(0.0, kTwoPi)};
    }

    std::array<double, kImagePixels> values;
    for (int y = 0; y < kImageHeight; ++y) {
        for (int x = 0; x < kImageWidth; ++x) {
            const double u0 = (x - (kImageWidth - 1) / 2.0) / kImageWidth;
            const double v0 = (y - (kImageHeight - 1) / 2.0) / kImageHeight;
            const double u = a00 * u0 + a01 * v0 + tx;
            const double v = a10 * u0 + a11 * v0 + ty;
            double waves[4];
            for (int j = 0; j < 4; ++j)
                waves[j] = std::sin(kTwoPi * (field.waves[j].fx * u + field.waves[j].fy * v) + field.waves[j].phase);
            double texture = 0.0;
            for (const Sinusoid& t : tex) texture += std::sin(kTwoPi * (t.fx * u0 + t.fy * v0) + t.phase);
            for (int c = 0; c < 3; ++c) {
                double signal = 0.0;
                for (int j = 0; j < 4; ++j) signal += field.mix[c][j] * waves[j];
                values[static_cast<size_t>(c * kImageHeight * kImageWidth + y * kImageWidth + x)] =
                    0.5 + field.bias[c] + 0.11 * signal + 0.16 * texture;
            }
        }
    }
    for (int k = 0; k < kImagePixels; ++k) {
        double v = values[static_cast<size_t>(k)] + 0.05 * rng.normal();
        out[k] = static_cast<std::uint8_t>(std::lround(clamp01(v) * 255.0));
    }
}

}  // namespace

CifarSplit make_synthetic_split(std::int64_t count, std::uint64_t seed, std::uint64_t stream_offset) {
    if (count < 1) throw ContractError("make_synthetic_split: count must be positive");
    std::array<ClassField, kNumClasses> fields;
    for (int k = 0; k < kNumClasses; ++k) fields[static_cast<size_t>(k)] = make_class_field(seed, k);

    std::vector<std::uint8_t> pixels(static_cast<size_t>(count) * kImagePixels);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < count; ++i) {
        const int label = static_cast<int>(i % kNumClasses);
        RngStream rng = RngStream::derive(seed, {stream::kSynth, 1, stream_offset + static_cast<std::uint64_t>(i)});
        render_sample(fields[static_cast<size_t>(label)], rng, pixels.data() + i * kImagePixels);
    }

    CifarSplit split;
    for (std::int64_t i = 0; i < count; ++i)
        split.append_record(i, static_cast<int>(i % kNumClasses),
                            {pixels.data() + i * kImagePixels, kImagePixels});
    return split;
}

void write_synthetic_cifar10(const std::filesystem::path& dir, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    CifarSplit train = make_synthetic_split(50000, seed, 0);
    CifarSplit test = make_synthetic_split(10000, seed, 1u << 26);

    auto write_records = [](const CifarSplit& s, std::int64_t begin, std::int64_t end,
                            const std::filesystem::path& file) {
        std::ofstream out(file, std::ios::binary);
        if (!out) throw DataError("cannot write synthetic data file: " + file.string());
        for (std::int64_t i = begin; i < end; ++i) {
            std::uint8_t label = static_cast<std::uint8_t>(s.label(i));
            out.write(reinterpret_cast<const char*>(&label), 1);
            auto px = s.raw_pixels(i);
            out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
        }
        if (!out) throw DataError("synthetic data write failed: " + file.string());
    };

    for (int f = 0; f < 5; ++f)
        write_records(train, f * 10000, (f + 1) * 10000, dir / strf("data_batch_%d.bin", f + 1));
    write_records(test, 0, 10000, dir / "test_batch.bin");
}

}  // namespace auginv
