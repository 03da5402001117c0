#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include "auginv/errors.hpp"
#include "auginv/network.hpp"
#include "auginv/objective.hpp"
#include "auginv/rng.hpp"
#include "support/helpers.hpp"
#include "support/naive_net.hpp"

using namespace auginv;

namespace {

template <typename S>
std::vector<S> random_batch(const Architecture& arch, int batch, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
    RngStream rng(seed);
    std::vector<S> x(static_cast<size_t>(batch) * arch.dims(0).flat());
    for (S& v : x) v = static_cast<S>(rng.uniform(lo, hi));
    return x;
}

NetParams<double> to_double(const ModelParams& p) {
    NetParams<double> out;
    out.layers.resize(p.layers.size());
    for (size_t l = 0; l < p.layers.size(); ++l) {
        out.layers[l].weights.assign(p.layers[l].weights.begin(), p.layers[l].weights.end());
        out.layers[l].biases.assign(p.layers[l].biases.begin(), p.layers[l].biases.end());
    }
    return out;
}

Architecture tiny_arch(std::vector<ConvSpec> specs, int in_ch, int in_hw) {
    Architecture a;
    a.in_ch = in_ch;
    a.in_h = a.in_w = in_hw;
    a.layers = std::move(specs);
    a.validate();
    return a;
}

}  // namespace

TEST_CASE("all-cnn-c has exactly 1,369,738 parameters") {
    Architecture arch = Architecture::all_cnn_c();
    CHECK(arch.param_count() == 1369738);
    // independent per-layer arithmetic
    const std::int64_t expected = (96 * 3 * 9 + 96) + 2 * (96 * 96 * 9 + 96) + (192 * 96 * 9 + 192) +
                                  3 * (192 * 192 * 9 + 192) + (192 * 192 + 192) + (10 * 192 + 10);
    CHECK(arch.param_count() == expected);
    Network<float> net(arch);
    CHECK(net.params().count() == expected);
}

TEST_CASE("tap dimensions follow the same-padding layout") {
    Architecture arch = Architecture::all_cnn_c();
    CHECK(arch.dims(1).flat() == 96 * 32 * 32);
    CHECK(arch.dims(3).flat() == 96 * 16 * 16);
    CHECK(arch.dims(6).flat() == 192 * 8 * 8);
    CHECK(arch.dims(9).flat() == 10 * 8 * 8);
    CHECK(arch.dims(0).flat() == 3 * 32 * 32);
}

TEST_CASE("initialization is seed-deterministic with the expected scale") {
    Network<float> a(Architecture::all_cnn_c()), b(Architecture::all_cnn_c());
    a.init_params(77);
    b.init_params(77);
    CHECK(a.params().layers[0].weights == b.params().layers[0].weights);
    CHECK(a.params().layers[8].weights == b.params().layers[8].weights);

    // layer-1 weight std ~ sqrt(2/27) = 0.272 over 2592 weights
    const auto& w = a.params().layers[0].weights;
    double mean = 0.0, var = 0.0;
    for (float v : w) mean += v;
    mean /= static_cast<double>(w.size());
    for (float v : w) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.size());
    CHECK(std::sqrt(var) == doctest::Approx(std::sqrt(2.0 / 27.0)).epsilon(0.10));
    for (float bias : a.params().layers[0].biases) CHECK(bias == 0.0f);
}

TEST_CASE("zero parameters give zero logits and zero taps beyond layer 0") {
    Architecture arch = Architecture::all_cnn_c(0.25);
    Network<float> net(arch);  // params start at zero
    auto batch = random_batch<float>(arch, 2, 5);
    ForwardState<float> state;
    net.forward(batch.data(), 2, state);
    for (float v : state.logits) CHECK(v == 0.0f);
    for (int l = 1; l <= arch.num_layers(); ++l)
        for (float v : state.act[static_cast<size_t>(l - 1)]) CHECK(v == 0.0f);
    // layer 0 is the input itself
    CHECK(std::equal(batch.begin(), batch.end(), state.input.begin()));
}

TEST_CASE("identical rows produce identical logits, and forwards repeat bit-exactly") {
    Architecture arch = Architecture::all_cnn_c(0.25);
    Network<float> net(arch);
    net.init_params(3);
    auto one = random_batch<float>(arch, 1, 9);
    std::vector<float> batch;
    for (int b = 0; b < 3; ++b) batch.insert(batch.end(), one.begin(), one.end());
    ForwardState<float> s1, s2;
    net.forward(batch.data(), 3, s1);
    net.forward(batch.data(), 3, s2);
    CHECK(s1.logits == s2.logits);
    const int classes = arch.num_classes();
    for (int c = 0; c < classes; ++c) {
        CHECK(s1.logits[static_cast<size_t>(c)] == s1.logits[static_cast<size_t>(classes + c)]);
        CHECK(s1.logits[static_cast<size_t>(c)] == s1.logits[static_cast<size_t>(2 * classes + c)]);
    }
}

TEST_CASE("engine convolution matches the naive 6-loop oracle") {
    SUBCASE("random small stack") {
        Architecture arch = tiny_arch(
            {{"c1", 5, 3, 3, 1, 1, true}, {"c2", 7, 5, 3, 2, 1, true}, {"c3", 4, 7, 1, 1, 0, false}}, 3, 9);
        Network<float> net(arch);
        net.init_params(21);
        auto batch = random_batch<float>(arch, 3, 22);
        ForwardState<float> state;
        net.forward(batch.data(), 3, state);
        std::vector<double> batch_d(batch.begin(), batch.end());
        auto oracle = testsupport::naive_logits(arch, to_double(net.params()), batch_d, 3);
        for (size_t k = 0; k < oracle.size(); ++k)
            CHECK(state.logits[k] == doctest::Approx(oracle[k]).epsilon(1e-4));
    }
    SUBCASE("quarter-width all-cnn-c, 2-image batch") {
        Architecture arch = Architecture::all_cnn_c(0.25);
        Network<float> net(arch);
        net.init_params(31);
        auto batch = random_batch<float>(arch, 2, 32);
        ForwardState<float> state;
        net.forward(batch.data(), 2, state);
        std::vector<double> batch_d(batch.begin(), batch.end());
        auto oracle = testsupport::naive_logits(arch, to_double(net.params()), batch_d, 2);
        for (size_t k = 0; k < oracle.size(); ++k) {
            CHECK(std::abs(state.logits[k] - oracle[k]) <=
                  1e-4 * std::max(1.0, std::abs(oracle[k])));
        }
    }
}

TEST_CASE("non-finite activations raise with the offending layer") {
    Architecture arch = Architecture::all_cnn_c(0.25);
    Network<float> net(arch);
    net.init_params(4);
    net.params().layers[2].weights[0] = std::numeric_limits<float>::infinity();
    auto batch = random_batch<float>(arch, 1, 5);
    ForwardState<float> state;
    CHECK_THROWS_WITH_AS(net.forward(batch.data(), 1, state), doctest::Contains("conv3"), NumericError);
}

TEST_CASE("backward: zero upstream gradients give zero parameter gradients") {
    Architecture arch = tiny_arch({{"c1", 4, 3, 3, 1, 1, true}, {"c2", 3, 4, 1, 1, 0, false}}, 3, 6);
    Network<double> net(arch);
    net.init_params(8);
    auto batch = random_batch<double>(arch, 2, 9);
    ForwardState<double> state;
    BackwardScratch<double> scratch;
    net.forward(batch.data(), 2, state);
    std::vector<double> dlogits(static_cast<size_t>(2) * arch.num_classes(), 0.0);
    NetParams<double> grads;
    net.backward(state, dlogits.data(), {}, grads, scratch);
    for (const auto& layer : grads.layers) {
        for (double v : layer.weights) CHECK(v == 0.0);
        for (double v : layer.biases) CHECK(v == 0.0);
    }
}

TEST_CASE("a tap-only loss at layer 1 leaves downstream layers untouched") {
    Architecture arch = tiny_arch({{"c1", 4, 3, 3, 1, 1, true}, {"c2", 3, 4, 3, 1, 1, false}}, 3, 6);
    Network<double> net(arch);
    net.init_params(11);
    auto batch = random_batch<double>(arch, 2, 12);
    ForwardState<double> state;
    BackwardScratch<double> scratch;
    net.forward(batch.data(), 2, state);
    std::vector<double> dlogits(static_cast<size_t>(2) * arch.num_classes(), 0.0);
    std::vector<double> tap1(static_cast<size_t>(2) * arch.dims(1).flat(), 1.0);  // loss = sum of tap 1
    NetParams<double> grads;
    net.backward(state, dlogits.data(), {{1, tap1.data()}}, grads, scratch);
    bool layer1_nonzero = false;
    for (double v : grads.layers[0].weights) layer1_nonzero = layer1_nonzero || v != 0.0;
    CHECK(layer1_nonzero);
    for (double v : grads.layers[1].weights) CHECK(v == 0.0);
    for (double v : grads.layers[1].biases) CHECK(v == 0.0);
}

// Central-difference harness (test-side, independent of the library's
// verification module): loss = CE + optional invariance terms.
namespace {
struct FdCase {
    Architecture arch;
    int batch;
    bool with_invariance;
};

struct FdEval {
    double loss = 0.0;
    std::uint64_t relu_pattern = 0;  // hash of the active-unit mask
};

FdEval fd_objective(Network<double>& net, const std::vector<double>& batch, int n, const std::vector<int>& labels,
                    bool with_invariance) {
    ForwardState<double> state;
    net.forward(batch.data(), n, state);
    FdEval eval;
    eval.loss = softmax_cross_entropy(state.logits.data(), labels.data(), n, net.arch().num_classes());
    if (with_invariance) {
        AlphaSchedule sched = alpha_schedule(net.arch().num_layers(), 0.1);
        GroupIndex groups = GroupIndex::contiguous(n, 2);
        eval.loss *= 1.0 - sched.alpha;
        for (int l = 1; l <= net.arch().num_layers(); ++l)
            eval.loss += sched.coeffs[static_cast<size_t>(l - 1)] *
                         invariance_loss(state.act[static_cast<size_t>(l - 1)].data(), n,
                                         state.flat[static_cast<size_t>(l)], groups);
    }
    eval.relu_pattern = 1469598103934665603ull;
    for (int l = 1; l <= net.arch().num_layers(); ++l) {
        if (!net.arch().layers[static_cast<size_t>(l - 1)].relu) continue;
        for (double v : state.act[static_cast<size_t>(l - 1)])
            eval.relu_pattern = (eval.relu_pattern ^ static_cast<std::uint64_t>(v > 0.0)) * 1099511628211ull;
    }
    return eval;
}

double max_fd_rel_err(const FdCase& fd, std::uint64_t seed, double eps) {
    Network<double> net(fd.arch);
    net.threads = 1;
    net.init_params(seed);
    auto batch = random_batch<double>(fd.arch, fd.batch, seed + 1);
    RngStream rng(seed + 2);
    std::vector<int> labels(static_cast<size_t>(fd.batch));
    for (int& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(fd.arch.num_classes())));

    // analytic gradients
    ForwardState<double> state;
    BackwardScratch<double> scratch;
    net.forward(batch.data(), fd.batch, state);
    std::vector<double> dlogits(static_cast<size_t>(fd.batch) * fd.arch.num_classes(), 0.0);
    std::map<int, const double*> taps;
    std::vector<std::vector<double>> tap_bufs;
    if (fd.with_invariance) {
        AlphaSchedule sched = alpha_schedule(fd.arch.num_layers(), 0.1);
        GroupIndex groups = GroupIndex::contiguous(fd.batch, 2);
        softmax_cross_entropy_grad(state.logits.data(), labels.data(), fd.batch, fd.arch.num_classes(),
                                   1.0 - sched.alpha, dlogits.data());
        tap_bufs.resize(static_cast<size_t>(fd.arch.num_layers()));
        for (int l = 1; l <= fd.arch.num_layers(); ++l) {
            auto& buf = tap_bufs[static_cast<size_t>(l - 1)];
            buf.assign(static_cast<size_t>(fd.batch) * state.flat[static_cast<size_t>(l)], 0.0);
            invariance_loss_grad(state.act[static_cast<size_t>(l - 1)].data(), fd.batch,
                                 state.flat[static_cast<size_t>(l)], GroupIndex::contiguous(fd.batch, 2),
                                 InvarianceVariant::kVerbatim, sched.coeffs[static_cast<size_t>(l - 1)], buf.data());
            taps[l] = buf.data();
        }
    } else {
        softmax_cross_entropy_grad(state.logits.data(), labels.data(), fd.batch, fd.arch.num_classes(), 1.0,
                                   dlogits.data());
    }
    NetParams<double> grads;
    net.backward(state, dlogits.data(), taps, grads, scratch);

    // Central differences are meaningless when the perturbation flips a ReLU
    // unit (the loss is not differentiable across the kink); such parameters
    // are skipped, and the caller bounds how many may be skipped.
    double worst = 0.0;
    std::int64_t skipped = 0, total = 0;
    for (size_t l = 0; l < grads.layers.size(); ++l) {
        auto probe = [&](AlignedVec<double>& param, const AlignedVec<double>& grad) {
            for (size_t i = 0; i < param.size(); ++i) {
                const double saved = param[i];
                param[i] = saved + eps;
                FdEval up = fd_objective(net, batch, fd.batch, labels, fd.with_invariance);
                param[i] = saved - eps;
                FdEval down = fd_objective(net, batch, fd.batch, labels, fd.with_invariance);
                param[i] = saved;
                ++total;
                if (up.relu_pattern != down.relu_pattern) {
                    ++skipped;
                    continue;
                }
                double fd_grad = (up.loss - down.loss) / (2 * eps);
                worst = std::max(worst,
                                 std::abs(grad[i] - fd_grad) /
                                     (std::max(std::abs(grad[i]), std::abs(fd_grad)) + 1e-8));
            }
        };
        probe(net.params().layers[l].weights, grads.layers[l].weights);
        probe(net.params().layers[l].biases, grads.layers[l].biases);
    }
    REQUIRE(skipped * 20 < total);  // kink skips must stay below 5%
    return worst;
}
}  // namespace

TEST_CASE("finite differences agree for every layer type") {
    CHECK(max_fd_rel_err({tiny_arch({{"c", 4, 3, 3, 1, 1, false}}, 3, 6), 4, false}, 101, 1e-5) < 1e-4);
    CHECK(max_fd_rel_err({tiny_arch({{"c", 4, 3, 3, 2, 1, false}}, 3, 6), 4, false}, 102, 1e-5) < 1e-4);
    CHECK(max_fd_rel_err({tiny_arch({{"c", 5, 3, 1, 1, 0, false}}, 3, 5), 4, false}, 103, 1e-5) < 1e-4);
    CHECK(max_fd_rel_err(
              {tiny_arch({{"c1", 4, 3, 3, 1, 1, true}, {"c2", 4, 4, 1, 1, 0, false}}, 3, 6), 4, false}, 104,
              1e-5) < 1e-4);
}

TEST_CASE("finite differences agree for the composite objective on the reduced network") {
    // 2 conv layers, 8 channels, 8x8 inputs; epsilon 1e-3 per the documented
    // tolerance contract.
    FdCase fd{tiny_arch({{"c1", 8, 3, 3, 1, 1, true}, {"c2", 8, 8, 3, 1, 1, false}}, 3, 8), 8, true};
    CHECK(max_fd_rel_err(fd, 105, 1e-3) < 1e-4);
}

TEST_CASE("checkpoint round trip and failure modes") {
    Architecture arch = Architecture::all_cnn_c(0.25);
    Network<float> net(arch);
    net.init_params(200);
    auto dir = testsupport::unique_temp_dir("ckpt");
    const auto path = dir / "model.ckpt";
    save_checkpoint(arch, net.params(), path);

    SUBCASE("round trip is bit-exact") {
        auto [arch2, params2] = load_checkpoint(path);
        CHECK(arch2 == arch);
        REQUIRE(params2.layers.size() == net.params().layers.size());
        for (size_t l = 0; l < params2.layers.size(); ++l) {
            CHECK(params2.layers[l].weights == net.params().layers[l].weights);
            CHECK(params2.layers[l].biases == net.params().layers[l].biases);
        }
    }
    SUBCASE("edited header shape fails to load") {
        auto text = std::filesystem::file_size(path);
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        std::string head(300, '\0');
        f.read(head.data(), 300);
        auto pos = head.find("layer conv2 24 24");
        REQUIRE(pos != std::string::npos);
        f.seekp(static_cast<std::streamoff>(pos + 12));
        f.write("25", 2);  // conv2 out_ch 24 -> 25
        f.close();
        CHECK(std::filesystem::file_size(path) == text);
        CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    }
    SUBCASE("truncated payload fails to load") {
        auto size = std::filesystem::file_size(path);
        std::filesystem::resize_file(path, size - 1);
        CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    }
    SUBCASE("not a checkpoint") {
        std::ofstream(dir / "junk.ckpt") << "hello\n";
        CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), CheckpointError);
    }
    std::filesystem::remove_all(dir);
}
