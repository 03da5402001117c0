#include "auginv/evaluator.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "auginv/errors.hpp"
#include "auginv/objective.hpp"
#include "auginv/rng.hpp"
#include "auginv/util.hpp"

namespace auginv {

namespace {

double msd(const float* a, const float* b, std::int64_t dim) {
    double acc = 0.0;
    for (std::int64_t k = 0; k < dim; ++k) {
        double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        acc += d * d;
    }
    return acc / static_cast<double>(dim);
}

std::int64_t effective_size(const CifarSplit& split, std::int64_t subset) {
    return subset > 0 ? std::min(split.size(), subset) : split.size();
}

}  // namespace

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw ContractError("quantile: empty sample");
    std::sort(values.begin(), values.end());
    double h = (static_cast<double>(values.size()) - 1.0) * p;
    size_t lo = static_cast<size_t>(h);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

double invariance_score(std::span<const float> f_x, std::span<const float> f_gx,
                        std::span<const double> reference_dists) {
    if (reference_dists.empty()) throw ContractError("invariance_score: no reference distances");
    double mean_ref = std::accumulate(reference_dists.begin(), reference_dists.end(), 0.0) /
                      static_cast<double>(reference_dists.size());
    if (!(mean_ref > 0.0)) throw DegenerateFeaturesError("invariance_score: zero mean reference distance");
    return 1.0 - mean_sq_distance(f_x, f_gx) / mean_ref;
}

InvarianceReport evaluate_invariance(const Network<float>& net, const CifarSplit& test, const ChannelStats& stats,
                                     const EvalConfig& cfg) {
    if (cfg.transforms < 1) throw ContractError("evaluate_invariance: need T >= 1");
    const std::int64_t n = effective_size(test, cfg.test_subset);
    if (cfg.references < 2 || cfg.references > n - 1)
        throw ContractError(strf("evaluate_invariance: R must be in [2, %lld]", static_cast<long long>(n - 1)));
    cfg.scheme.validate();

    const Architecture& arch = net.arch();
    const int L = arch.num_layers();
    const int T = cfg.transforms;
    const int nt = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();

    InvarianceReport report;
    report.transforms = T;
    report.references = cfg.references;
    report.seed = cfg.seed;
    report.images = n;
    for (int l = 0; l <= L; ++l) report.layers.push_back(l);
    std::vector<std::int64_t> flat(static_cast<size_t>(L) + 1);
    for (int l = 0; l <= L; ++l) flat[static_cast<size_t>(l)] = arch.dims(l).flat();
    report.sigma.resize(static_cast<size_t>(L) + 1);
    for (int l = 0; l <= L; ++l) report.sigma[static_cast<size_t>(l)].resize(static_cast<size_t>(n) * T);

    // Pass 1: taps of every untransformed test image, reused both as the
    // comparison anchors and as the reference pool.
    std::vector<AlignedVec<float>> tap_cache(static_cast<size_t>(L) + 1);
    for (int l = 0; l <= L; ++l)
        tap_cache[static_cast<size_t>(l)].resize(static_cast<size_t>(n) * flat[static_cast<size_t>(l)]);
    {
        ForwardState<float> state;
        AlignedVec<float> batch_buf(static_cast<size_t>(cfg.batch) * kImagePixels);
        for (std::int64_t begin = 0; begin < n; begin += cfg.batch) {
            const int bsize = static_cast<int>(std::min<std::int64_t>(cfg.batch, n - begin));
            for (int b = 0; b < bsize; ++b) {
                float* dst = batch_buf.data() + static_cast<std::int64_t>(b) * kImagePixels;
                test.copy_pixels(begin + b, dst);
                normalize_image(dst, stats);
            }
            net.forward(batch_buf.data(), bsize, state);
            for (int l = 0; l <= L; ++l) {
                const float* src = state.layer_data(l);
                std::copy(src, src + bsize * flat[static_cast<size_t>(l)],
                          tap_cache[static_cast<size_t>(l)].data() + begin * flat[static_cast<size_t>(l)]);
            }
        }
    }

    // Pass 2: per image, forward the T transformed versions (batched across
    // images) and score against the cached reference taps.
    const int group = std::max(1, cfg.batch / T);
    ForwardState<float> state;
    AlignedVec<float> batch_buf(static_cast<size_t>(group) * T * kImagePixels);
    std::vector<float> raw(kImagePixels);
    std::vector<std::int64_t> ref_ids(static_cast<size_t>(group) * cfg.references);

    for (std::int64_t begin = 0; begin < n; begin += group) {
        const int gsize = static_cast<int>(std::min<std::int64_t>(group, n - begin));
        for (int g = 0; g < gsize; ++g) {
            const std::int64_t i = begin + g;
            RngStream rng = RngStream::derive(cfg.seed, {stream::kEval, static_cast<std::uint64_t>(i)});
            test.copy_pixels(i, raw.data());
            for (int t = 0; t < T; ++t) {
                AugmentParams params = sample_eval_extreme_params(rng, cfg.scheme);
                float* dst = batch_buf.data() + (static_cast<std::int64_t>(g) * T + t) * kImagePixels;
                apply_augmentation(raw.data(), dst, kImageChannels, kImageHeight, kImageWidth, params);
                normalize_image(dst, stats);
            }
            // Fixed per-image reference subset of R other images (j != i),
            // drawn without replacement after the transform draws.
            std::int64_t* refs = ref_ids.data() + static_cast<std::int64_t>(g) * cfg.references;
            for (int r = 0; r < cfg.references; ++r) {
                std::int64_t j = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n - 1 - r)));
                // map j into [0, n) skipping i and the r already-drawn ids
                // (selection sampling over the shrinking remainder).
                std::vector<std::int64_t> taken(refs, refs + r);
                taken.push_back(i);
                std::sort(taken.begin(), taken.end());
                for (std::int64_t t : taken)
                    if (j >= t) ++j;
                refs[r] = j;
            }
        }

        net.forward(batch_buf.data(), gsize * T, state);

        // Exceptions must not unwind across the parallel region; degenerate
        // reference distances are recorded and raised afterwards.
        std::int64_t bad_image = -1;
        int bad_layer = -1;
#pragma omp parallel for schedule(static) num_threads(nt) collapse(2)
        for (int g = 0; g < gsize; ++g) {
            for (int l = 0; l <= L; ++l) {
                const std::int64_t i = begin + g;
                const std::int64_t d = flat[static_cast<size_t>(l)];
                const float* anchor = tap_cache[static_cast<size_t>(l)].data() + i * d;
                const std::int64_t* refs = ref_ids.data() + static_cast<std::int64_t>(g) * cfg.references;
                double mean_ref = 0.0;
                for (int r = 0; r < cfg.references; ++r)
                    mean_ref += msd(anchor, tap_cache[static_cast<size_t>(l)].data() + refs[r] * d, d);
                mean_ref /= static_cast<double>(cfg.references);
                if (!(mean_ref > 0.0)) {
#pragma omp critical
                    {
                        bad_image = i;
                        bad_layer = l;
                    }
                    continue;
                }
                for (int t = 0; t < T; ++t) {
                    const float* gx = state.tap(l, g * T + t).data();
                    double sigma = 1.0 - msd(anchor, gx, d) / mean_ref;
                    report.sigma[static_cast<size_t>(l)][static_cast<size_t>(i * T + t)] =
                        static_cast<float>(sigma);
                }
            }
        }
        if (bad_layer >= 0)
            throw DegenerateFeaturesError(strf("zero mean reference distance at layer %d (image %lld)", bad_layer,
                                               static_cast<long long>(bad_image)));
    }

    // Summaries under both poolings.
    for (int l = 0; l <= L; ++l) {
        const auto& vals = report.sigma[static_cast<size_t>(l)];
        std::vector<double> all(vals.begin(), vals.end());
        std::vector<double> pooled(static_cast<size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            double mean = 0.0;
            for (int t = 0; t < T; ++t) mean += vals[static_cast<size_t>(i * T + t)];
            pooled[static_cast<size_t>(i)] = mean / T;
        }
        LayerSummary s;
        s.layer = l;
        s.median = quantile(all, 0.5);
        s.q1 = quantile(all, 0.25);
        s.q3 = quantile(all, 0.75);
        s.median_pooled = quantile(pooled, 0.5);
        report.summaries.push_back(s);
    }
    return report;
}

double evaluate_accuracy(const Network<float>& net, const CifarSplit& test, const ChannelStats& stats,
                         int batch, std::int64_t subset) {
    const std::int64_t n = effective_size(test, subset);
    const int classes = net.arch().num_classes();
    ForwardState<float> state;
    AlignedVec<float> batch_buf(static_cast<size_t>(batch) * kImagePixels);
    std::int64_t correct = 0;
    for (std::int64_t begin = 0; begin < n; begin += batch) {
        const int bsize = static_cast<int>(std::min<std::int64_t>(batch, n - begin));
        for (int b = 0; b < bsize; ++b) {
            float* dst = batch_buf.data() + static_cast<std::int64_t>(b) * kImagePixels;
            test.copy_pixels(begin + b, dst);
            normalize_image(dst, stats);
        }
        net.forward(batch_buf.data(), bsize, state);
        for (int b = 0; b < bsize; ++b) {
            const float* row = state.logits.data() + static_cast<std::int64_t>(b) * classes;
            int best = 0;
            for (int c = 1; c < classes; ++c)
                if (row[c] > row[best]) best = c;
            if (best == test.label(begin + b)) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

void write_invariance_csv(const InvarianceReport& report, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DataError("cannot write " + file.string());
    out << "layer,image_id,transform_index,sigma\n";
    for (size_t li = 0; li < report.layers.size(); ++li) {
        const int layer = report.layers[li];
        const auto& vals = report.sigma[li];
        for (std::int64_t i = 0; i < report.images; ++i)
            for (int t = 0; t < report.transforms; ++t)
                out << layer << ',' << i << ',' << t << ','
                    << g6(vals[static_cast<size_t>(i * report.transforms + t)]) << "\n";
    }
    out << "# meta,transforms=" << report.transforms << ",references=" << report.references
        << ",seed=" << report.seed << ",images=" << report.images << ",layer0_space=normalized\n";
    for (const LayerSummary& s : report.summaries)
        out << "# summary,layer=" << s.layer << ",median=" << g9(s.median) << ",q1=" << g9(s.q1)
            << ",q3=" << g9(s.q3) << ",median_pooled=" << g9(s.median_pooled) << "\n";
    if (!out) throw DataError("write failed: " + file.string());
}

InvarianceReport read_invariance_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open " + file.string());
    std::string line;
    if (!std::getline(in, line) || line != "layer,image_id,transform_index,sigma")
        throw DataError("unexpected invariance.csv header in " + file.string());

    InvarianceReport report;
    std::vector<std::vector<float>> by_layer;
    std::int64_t max_image = -1;
    int max_t = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# meta,", 0) == 0) {
                for (const std::string& kv : split(line.substr(7), ',')) {
                    auto parts = split(kv, '=');
                    if (parts.size() != 2) continue;
                    if (parts[0] == "transforms") report.transforms = std::stoi(parts[1]);
                    if (parts[0] == "references") report.references = std::stoi(parts[1]);
                    if (parts[0] == "images") report.images = std::stoll(parts[1]);
                    if (parts[0] == "seed") report.seed = std::stoull(parts[1]);
                }
            }
            continue;  // summaries are recomputed from the raw rows
        }
        auto fields = split(line, ',');
        if (fields.size() != 4) throw DataError("malformed invariance.csv row: " + line);
        int layer = std::stoi(fields[0]);
        std::int64_t image = std::stoll(fields[1]);
        int t = std::stoi(fields[2]);
        float sigma = std::stof(fields[3]);
        if (layer >= static_cast<int>(by_layer.size())) by_layer.resize(static_cast<size_t>(layer) + 1);
        by_layer[static_cast<size_t>(layer)].push_back(sigma);
        max_image = std::max(max_image, image);
        max_t = std::max(max_t, t);
    }
    if (report.transforms == 0) report.transforms = max_t + 1;
    if (report.images == 0) report.images = max_image + 1;
    for (int l = 0; l < static_cast<int>(by_layer.size()); ++l) report.layers.push_back(l);
    report.sigma = std::move(by_layer);

    for (size_t li = 0; li < report.sigma.size(); ++li) {
        const auto& vals = report.sigma[li];
        if (vals.size() != static_cast<size_t>(report.images) * report.transforms)
            throw DataError(strf("invariance.csv layer %zu has %zu rows, expected %lld", li, vals.size(),
                                 static_cast<long long>(report.images * report.transforms)));
        std::vector<double> all(vals.begin(), vals.end());
        std::vector<double> pooled(static_cast<size_t>(report.images));
        for (std::int64_t i = 0; i < report.images; ++i) {
            double mean = 0.0;
            for (int t = 0; t < report.transforms; ++t) mean += vals[static_cast<size_t>(i * report.transforms + t)];
            pooled[static_cast<size_t>(i)] = mean / report.transforms;
        }
        LayerSummary s;
        s.layer = static_cast<int>(li);
        s.median = quantile(all, 0.5);
        s.q1 = quantile(all, 0.25);
        s.q3 = quantile(all, 0.75);
        s.median_pooled = quantile(pooled, 0.5);
        report.summaries.push_back(s);
    }
    return report;
}

}  // namespace auginv
