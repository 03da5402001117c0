#include "auginv/gradcheck.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "auginv/errors.hpp"
#include "auginv/evaluator.hpp"
#include "auginv/network.hpp"
#include "auginv/objective.hpp"
#include "auginv/rng.hpp"

namespace auginv {

namespace {

// One scalar objective over a double-precision network: cross-entropy (Eq-4
// composite when a schedule is supplied) as a function of the parameters.
struct Objective {
    Network<double>& net;
    const std::vector<double>& images;
    const std::vector<int>& labels;
    int batch;
    const GroupIndex* groups = nullptr;        // with schedule: invariance terms on
    const AlphaSchedule* schedule = nullptr;   // layers 1..L
    InvarianceVariant variant = InvarianceVariant::kVerbatim;

    double value(ForwardState<double>& state, std::uint64_t* relu_pattern = nullptr) const {
        net.forward(images.data(), batch, state);
        const int classes = net.arch().num_classes();
        double ce = softmax_cross_entropy(state.logits.data(), labels.data(), batch, classes);
        double total = ce;
        if (schedule != nullptr) {
            total = (1.0 - schedule->alpha) * ce;
            for (size_t l = 0; l < schedule->coeffs.size(); ++l)
                total += schedule->coeffs[l] *
                         invariance_loss(state.act[l].data(), batch, state.flat[l + 1], *groups, variant);
        }
        if (relu_pattern != nullptr) {
            std::uint64_t h = 1469598103934665603ull;
            for (int l = 1; l <= net.arch().num_layers(); ++l) {
                if (!net.arch().layers[static_cast<size_t>(l - 1)].relu) continue;
                for (double v : state.act[static_cast<size_t>(l - 1)])
                    h = (h ^ static_cast<std::uint64_t>(v > 0.0)) * 1099511628211ull;
            }
            *relu_pattern = h;
        }
        return total;
    }

    void analytic_grads(NetParams<double>& grads) const {
        ForwardState<double> state;
        BackwardScratch<double> scratch;
        net.forward(images.data(), batch, state);
        const int classes = net.arch().num_classes();
        std::vector<double> dlogits(static_cast<size_t>(batch) * classes, 0.0);
        std::map<int, const double*> tap_grads;
        std::vector<std::vector<double>> tap_bufs;
        if (schedule == nullptr) {
            softmax_cross_entropy_grad(state.logits.data(), labels.data(), batch, classes, 1.0, dlogits.data());
        } else {
            softmax_cross_entropy_grad(state.logits.data(), labels.data(), batch, classes, 1.0 - schedule->alpha,
                                       dlogits.data());
            tap_bufs.resize(schedule->coeffs.size());
            for (size_t l = 0; l < schedule->coeffs.size(); ++l) {
                tap_bufs[l].assign(static_cast<size_t>(batch) * state.flat[l + 1], 0.0);
                invariance_loss_grad(state.act[l].data(), batch, state.flat[l + 1], *groups, variant,
                                     schedule->coeffs[l], tap_bufs[l].data());
                tap_grads[static_cast<int>(l) + 1] = tap_bufs[l].data();
            }
        }
        net.backward(state, dlogits.data(), tap_grads, grads, scratch);
    }
};

double max_rel_err_fd(const Objective& obj, double epsilon) {
    NetParams<double> analytic = NetParams<double>::zeros(obj.net.arch());
    obj.analytic_grads(analytic);
    ForwardState<double> state;
    double worst = 0.0;
    std::int64_t skipped = 0, total = 0;
    for (size_t l = 0; l < obj.net.params().layers.size(); ++l) {
        auto check_span = [&](AlignedVec<double>& param, const AlignedVec<double>& grad) {
            for (size_t i = 0; i < param.size(); ++i) {
                const double saved = param[i];
                std::uint64_t up_pattern = 0, down_pattern = 0;
                param[i] = saved + epsilon;
                const double up = obj.value(state, &up_pattern);
                param[i] = saved - epsilon;
                const double down = obj.value(state, &down_pattern);
                param[i] = saved;
                ++total;
                // a perturbation that flips a ReLU unit crosses a kink; the
                // central difference is not a gradient estimate there
                if (up_pattern != down_pattern) {
                    ++skipped;
                    continue;
                }
                const double fd = (up - down) / (2.0 * epsilon);
                const double a = grad[i];
                const double err = std::abs(a - fd) / (std::max(std::abs(a), std::abs(fd)) + 1e-8);
                worst = std::max(worst, err);
            }
        };
        check_span(obj.net.params().layers[l].weights, analytic.layers[l].weights);
        check_span(obj.net.params().layers[l].biases, analytic.layers[l].biases);
    }
    if (skipped * 20 >= total) return 1.0;  // too many kink skips to trust the check
    return worst;
}

Architecture stack(std::vector<ConvSpec> specs, int in_ch, int in_hw) {
    Architecture a;
    a.in_ch = in_ch;
    a.in_h = a.in_w = in_hw;
    a.layers = std::move(specs);
    a.validate();
    return a;
}

CheckResult fd_check(const std::string& name, Architecture arch, int batch, std::uint64_t seed,
                     bool with_invariance) {
    Network<double> net(arch);
    net.threads = 1;
    net.init_params(seed);
    RngStream rng = RngStream::derive(seed, {0xfdc});
    std::vector<double> images(static_cast<size_t>(batch) * arch.dims(0).flat());
    for (double& v : images) v = rng.uniform(-1.0, 1.0);
    std::vector<int> labels(static_cast<size_t>(batch));
    for (int& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(arch.num_classes())));

    GroupIndex groups;
    AlphaSchedule schedule;
    Objective obj{net, images, labels, batch};
    if (with_invariance) {
        groups = GroupIndex::contiguous(batch, 2);
        schedule = alpha_schedule(arch.num_layers(), 0.1);
        obj.groups = &groups;
        obj.schedule = &schedule;
    }

    CheckResult r;
    r.name = name;
    r.tolerance = 1e-4;
    r.max_rel_err = max_rel_err_fd(obj, 1e-5);
    r.pass = r.max_rel_err < r.tolerance;
    return r;
}

CheckResult simple(const std::string& name, double err, double tol) {
    return {name, err, tol, err < tol};
}

}  // namespace

std::vector<CheckResult> run_gradient_checks(std::uint64_t seed) {
    std::vector<CheckResult> results;
    results.push_back(fd_check("conv3x3", stack({{"c1", 4, 3, 3, 1, 1, false}}, 3, 6), 4, seed, false));
    results.push_back(fd_check("conv3x3_stride2", stack({{"c1", 4, 3, 3, 2, 1, false}}, 3, 6), 4, seed + 1, false));
    results.push_back(fd_check("conv1x1", stack({{"c1", 5, 3, 1, 1, 0, false}}, 3, 5), 4, seed + 2, false));
    results.push_back(fd_check(
        "relu_stack", stack({{"c1", 4, 3, 3, 1, 1, true}, {"c2", 4, 4, 1, 1, 0, false}}, 3, 6), 4, seed + 3, false));
    results.push_back(fd_check("gap_softmax_ce", stack({{"c1", 6, 2, 1, 1, 0, false}}, 2, 4), 6, seed + 4, false));
    // Reduced network for the composite objective: 2 conv layers, 8 channels,
    // 8x8 inputs, invariance terms on both layers.
    results.push_back(fd_check(
        "full_objective",
        stack({{"c1", 8, 3, 3, 1, 1, true}, {"c2", 8, 8, 3, 1, 1, false}}, 3, 8), 8, seed + 5, true));
    return results;
}

std::vector<CheckResult> run_objective_checks(std::uint64_t seed) {
    std::vector<CheckResult> results;

    {
        const std::vector<double> a{0.0, 0.0}, b{2.0, 4.0};
        double v = mean_sq_distance<double>(a, b);
        results.push_back(simple("mean_sq_distance_direct", std::abs(v - 10.0), 1e-12));
    }
    {
        // B=4, M=2, one-dimensional activations {0,1} and {4,6}.
        const std::vector<double> x{0.0, 1.0, 4.0, 6.0};
        GroupIndex g = GroupIndex::contiguous(4, 2);
        double v = invariance_loss(x.data(), 4, 1, g);
        results.push_back(simple("invariance_loss_direct", std::abs(v - 2.5 / 11.375), 1e-12));
        // Activation-scale invariance: the ratio is 0-homogeneous.
        for (double c : {0.5, 3.0}) {
            std::vector<double> xs(x);
            for (double& e : xs) e *= c;
            double vs = invariance_loss(xs.data(), 4, 1, g);
            results.push_back(simple("invariance_loss_scale_" + std::to_string(c), std::abs(vs - v) / v, 1e-6));
        }
    }
    {
        double worst = 0.0;
        for (int layers = 2; layers <= 9; ++layers) {
            AlphaSchedule s = alpha_schedule(layers, 0.1);
            double sum = 0.0;
            for (double c : s.coeffs) sum += c;
            worst = std::max(worst, std::abs(sum - 0.1));
            worst = std::max(worst, std::abs(s.coeffs.back() - 10.0 * s.coeffs.front()));
        }
        results.push_back(simple("alpha_schedule_sum_ratio", worst, 1e-9));
    }
    {
        std::vector<double> logits(30, 0.25);  // uniform rows
        std::vector<int> labels{0, 3, 9};
        double v = softmax_cross_entropy(logits.data(), labels.data(), 3, 10);
        results.push_back(simple("cross_entropy_uniform", std::abs(v - std::log(10.0)), 1e-12));
        logits.assign(10, 0.0);
        logits[4] = 30.0;
        int label4 = 4;
        results.push_back(simple("cross_entropy_saturated", softmax_cross_entropy(logits.data(), &label4, 1, 10),
                                 1e-9));
    }
    {
        AlphaSchedule s = alpha_schedule(2, 0.1);
        std::vector<double> inv{1.0, 1.0};
        double v = total_loss(std::log(10.0), inv, s);
        results.push_back(simple("total_loss_direct", std::abs(v - (0.9 * std::log(10.0) + 0.1)), 1e-12));
    }
    {
        std::vector<float> fx{1.0f, 2.0f}, fgx{2.0f, 3.0f};  // d = 1
        std::vector<double> refs{1.0, 3.0};                  // mean 2
        double v = invariance_score(fx, fgx, refs);
        results.push_back(simple("invariance_score_direct", std::abs(v - 0.5), 1e-12));
    }
    {
        // Matrix-expansion distances against direct differences.
        RngStream rng = RngStream::derive(seed, {0xd15});
        const int batch = 6;
        const std::int64_t dim = 17;
        std::vector<double> x(static_cast<size_t>(batch) * dim);
        for (double& v : x) v = rng.uniform(-2.0, 2.0);
        std::vector<double> dists(batch * batch);
        pairwise_mean_sq_dists(x.data(), batch, dim, dists.data());
        double worst = 0.0;
        for (int i = 0; i < batch; ++i)
            for (int j = 0; j < batch; ++j) {
                std::span<const double> a(x.data() + i * dim, dim), b(x.data() + j * dim, dim);
                worst = std::max(worst, std::abs(dists[static_cast<size_t>(i * batch + j)] - mean_sq_distance(a, b)));
            }
        results.push_back(simple("pairwise_vs_direct", worst, 1e-12));
    }
    return results;
}

}  // namespace auginv
