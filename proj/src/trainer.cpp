#include "auginv/trainer.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "auginv/batcher.hpp"
#include "auginv/errors.hpp"
#include "auginv/util.hpp"

namespace auginv {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double epoch_learning_rate(const TrainConfig& cfg, int epoch) {
    double lr = cfg.learning_rate;
    for (int milestone : cfg.lr_milestones)
        if (epoch >= milestone) lr *= cfg.lr_decay;
    return lr;
}

// State shared by train() and measure_overhead(): the model, the momentum
// buffer, the batch buffers, and one optimization step.
class TrainLoop {
public:
    TrainLoop(const TrainConfig& cfg, const Dataset& data)
        : cfg_(cfg),
          data_(data),
          arch_(Architecture::all_cnn_c(cfg.width_mult)),
          net_(arch_),
          ring_(effective_train_size(cfg, data), RngStream::derive(cfg.base_seed, {stream::kPlans})) {
        cfg_.validate();
        if (cfg_.inv_layers > arch_.num_layers())
            throw ConfigError(strf("inv_layers %d exceeds the %d network layers", cfg_.inv_layers,
                                   arch_.num_layers()));
        net_.threads = cfg_.threads;
        net_.init_params(cfg_.base_seed);
        velocity_ = NetParams<float>::zeros(arch_);
        grads_ = NetParams<float>::zeros(arch_);
        if (cfg_.invariance_mode && cfg_.inv_layers > 0)
            schedule_ = alpha_schedule(cfg_.inv_layers, cfg_.alpha);

        const int batch = cfg_.batch_size;
        images_.resize(static_cast<size_t>(batch) * kImagePixels);
        labels_.resize(static_cast<size_t>(batch));
        dlogits_.resize(static_cast<size_t>(batch) * arch_.num_classes());
        tap_grad_bufs_.resize(static_cast<size_t>(cfg_.inv_layers));
        for (int l = 1; l <= cfg_.inv_layers; ++l)
            tap_grad_bufs_[static_cast<size_t>(l - 1)].resize(static_cast<size_t>(batch) * arch_.dims(l).flat());
    }

    static std::int64_t effective_train_size(const TrainConfig& cfg, const Dataset& data) {
        std::int64_t n = data.train.size();
        if (cfg.train_subset > 0) n = std::min(n, cfg.train_subset);
        if (cfg.batch_size > n)
            throw ConfigError(strf("batch_size %d exceeds the %lld available training images", cfg.batch_size,
                                   static_cast<long long>(n)));
        return n;
    }

    std::int64_t train_size() const { return ring_.num_seeds(); }
    const Architecture& arch() const { return arch_; }
    Network<float>& net() { return net_; }

    std::vector<BatchPlan> epoch_plans() {
        const int train_m = cfg_.invariance_mode ? cfg_.m_copies : 1;
        return build_epoch_plans(ring_, train_size(), cfg_.batch_size, train_m, cfg_.invariance_mode);
    }

    struct StepStats {
        double cross_entropy = 0.0;
        std::vector<double> inv_loss;  // per layer; NaN where skipped/not computed
        std::int64_t degenerate = 0;
        int correct = 0;
    };

    // Materialize + forward + Eq-4 gradients + SGD update for one plan.
    StepStats step(const BatchPlan& plan, int epoch, std::int64_t step_index, double lr, bool monitor) {
        const int batch = plan.batch_size();
        const int classes = arch_.num_classes();
        const int L = cfg_.inv_layers;
        StepStats stats;
        stats.inv_loss.assign(static_cast<size_t>(L), std::numeric_limits<double>::quiet_NaN());

        RngStream aug_rng = RngStream::derive(
            cfg_.base_seed, {stream::kAugment, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step_index)});
        materialize_batch(plan, data_.train, data_.stats, cfg_.scheme, aug_rng, images_.data(), labels_.data());

        try {
            net_.forward(images_.data(), batch, state_);
        } catch (const NumericError& e) {
            throw NumericError(strf("epoch %d step %lld: %s", epoch, static_cast<long long>(step_index), e.what()));
        }

        std::fill(dlogits_.begin(), dlogits_.end(), 0.0f);
        const bool inv_active = cfg_.invariance_mode && L > 0;
        const double ce_upstream = inv_active ? 1.0 - cfg_.alpha : 1.0;
        stats.cross_entropy =
            softmax_cross_entropy_grad(state_.logits.data(), labels_.data(), batch, classes, ce_upstream,
                                       dlogits_.data());

        std::map<int, const float*> tap_grads;
        if (inv_active) {
            const GroupIndex groups = plan.groups();
            for (int l = 1; l <= L; ++l) {
                auto& buf = tap_grad_bufs_[static_cast<size_t>(l - 1)];
                std::fill(buf.begin(), buf.end(), 0.0f);
                try {
                    double v = invariance_loss_grad(state_.act[static_cast<size_t>(l - 1)].data(), batch,
                                                    state_.flat[static_cast<size_t>(l)], groups, cfg_.variant,
                                                    schedule_.coeffs[static_cast<size_t>(l - 1)], buf.data());
                    stats.inv_loss[static_cast<size_t>(l - 1)] = v;
                    tap_grads[l] = buf.data();
                } catch (const DegenerateBatchError&) {
                    ++stats.degenerate;  // skip this layer's term at this step
                }
            }
        } else if (monitor && L > 0) {
            monitor_step(plan, epoch, step_index, stats);
        }

        double check = stats.cross_entropy;
        for (double v : stats.inv_loss)
            if (!std::isnan(v)) check += v;
        if (!std::isfinite(check))
            throw NumericError(strf("non-finite loss at epoch %d step %lld", epoch, static_cast<long long>(step_index)));

        net_.backward(state_, dlogits_.data(), tap_grads, grads_, scratch_);
        if (cfg_.grad_clip > 0.0) clip_gradients();
        sgd_update(lr);

        for (int b = 0; b < batch; ++b) {
            const float* row = state_.logits.data() + static_cast<std::int64_t>(b) * classes;
            int best = 0;
            for (int c = 1; c < classes; ++c)
                if (row[c] > row[best]) best = c;
            if (best == labels_[static_cast<size_t>(b)]) ++stats.correct;
        }
        return stats;
    }

private:
    // Eq-ratio losses of the baseline model, measured on an auxiliary
    // M-grouped batch assembled from the plan's leading seeds. Detached from
    // training: separate streams, no ring interaction, no gradients.
    void monitor_step(const BatchPlan& plan, int epoch, std::int64_t step_index, StepStats& stats) {
        const int groups_n = cfg_.batch_size / cfg_.m_copies;
        BatchPlan mon_plan;
        mon_plan.m_copies = cfg_.m_copies;
        mon_plan.seed_ids.assign(plan.seed_ids.begin(), plan.seed_ids.begin() + groups_n);
        const int mon_batch = mon_plan.batch_size();
        if (mon_images_.empty()) {
            mon_images_.resize(static_cast<size_t>(mon_batch) * kImagePixels);
            mon_labels_.resize(static_cast<size_t>(mon_batch));
        }
        RngStream mon_rng = RngStream::derive(
            cfg_.base_seed, {stream::kMonitor, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(step_index)});
        materialize_batch(mon_plan, data_.train, data_.stats, cfg_.scheme, mon_rng, mon_images_.data(),
                          mon_labels_.data());
        net_.forward(mon_images_.data(), mon_batch, mon_state_);
        const GroupIndex groups = mon_plan.groups();
        for (int l = 1; l <= cfg_.inv_layers; ++l) {
            try {
                stats.inv_loss[static_cast<size_t>(l - 1)] =
                    invariance_loss(mon_state_.act[static_cast<size_t>(l - 1)].data(), mon_batch,
                                    mon_state_.flat[static_cast<size_t>(l)], groups, cfg_.variant);
            } catch (const DegenerateBatchError&) {
                ++stats.degenerate;
            }
        }
    }

    void clip_gradients() {
        double norm_sq = 0.0;
        for (const auto& layer : grads_.layers) {
            for (float v : layer.weights) norm_sq += static_cast<double>(v) * v;
            for (float v : layer.biases) norm_sq += static_cast<double>(v) * v;
        }
        double norm = std::sqrt(norm_sq);
        if (norm <= cfg_.grad_clip) return;
        float scale = static_cast<float>(cfg_.grad_clip / norm);
        for (auto& layer : grads_.layers) {
            for (float& v : layer.weights) v *= scale;
            for (float& v : layer.biases) v *= scale;
        }
    }

    void sgd_update(double lr) {
        const float mu = static_cast<float>(cfg_.momentum);
        const float step = static_cast<float>(lr);
        for (size_t l = 0; l < grads_.layers.size(); ++l) {
            auto apply = [&](AlignedVec<float>& p, AlignedVec<float>& v, const AlignedVec<float>& g) {
                Eigen::Map<Eigen::VectorXf> pm(p.data(), static_cast<Eigen::Index>(p.size()));
                Eigen::Map<Eigen::VectorXf> vm(v.data(), static_cast<Eigen::Index>(v.size()));
                Eigen::Map<const Eigen::VectorXf> gm(g.data(), static_cast<Eigen::Index>(g.size()));
                vm = mu * vm - step * gm;
                pm += vm;
            };
            apply(net_.params().layers[l].weights, velocity_.layers[l].weights, grads_.layers[l].weights);
            apply(net_.params().layers[l].biases, velocity_.layers[l].biases, grads_.layers[l].biases);
        }
    }

    TrainConfig cfg_;
    const Dataset& data_;
    Architecture arch_;
    Network<float> net_;
    SeedRing ring_;
    NetParams<float> velocity_, grads_;
    AlphaSchedule schedule_;
    ForwardState<float> state_, mon_state_;
    BackwardScratch<float> scratch_;
    AlignedVec<float> images_, mon_images_, dlogits_;
    std::vector<int> labels_, mon_labels_;
    std::vector<AlignedVec<float>> tap_grad_bufs_;
};

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must be in (0,1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (m_copies < 1) throw ConfigError("m_copies must be >= 1");
    if (m_copies > batch_size) throw ConfigError("m_copies cannot exceed batch_size");
    if (batch_size % m_copies != 0) throw ConfigError("batch_size must be divisible by m_copies");
    if (inv_layers < 0) throw ConfigError("inv_layers must be >= 0");
    if ((invariance_mode || monitor_invariance) && inv_layers > 0) {
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0,1)");
        if (m_copies < 2) throw ConfigError("the invariance terms need m_copies >= 2");
        if (batch_size / m_copies < 2) throw ConfigError("the invariance terms need at least two groups per batch");
    }
    if (monitor_every < 1) throw ConfigError("monitor_every must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
    if (train_subset < 0) throw ConfigError("train_subset must be >= 0");
    if (!(width_mult > 0.0)) throw ConfigError("width_mult must be positive");
    if (threads < 0) throw ConfigError("threads must be >= 0");
    scheme.validate();
}

RunWriter::RunWriter(std::filesystem::path run_dir, int inv_layers)
    : dir_(std::move(run_dir)), inv_layers_(inv_layers) {
    std::filesystem::create_directories(dir_);
    metrics_.open(dir_ / "metrics.csv", std::ios::binary);
    timing_.open(dir_ / "timing.csv", std::ios::binary);
    if (!metrics_ || !timing_) throw DataError("cannot open run files in " + dir_.string());
    metrics_ << "epoch,learning_rate,cross_entropy,train_accuracy,degenerate_skips";
    for (int l = 1; l <= inv_layers_; ++l) metrics_ << ",inv_conv" << l;
    metrics_ << "\n";
    timing_ << "epoch,seconds\n";
}

void RunWriter::append(const EpochLog& log) {
    metrics_ << log.epoch << ',' << g9(log.learning_rate) << ',' << g9(log.cross_entropy) << ','
             << g9(log.train_accuracy) << ',' << log.degenerate_skips;
    for (int l = 0; l < inv_layers_; ++l) {
        double v = l < static_cast<int>(log.inv_loss.size()) ? log.inv_loss[static_cast<size_t>(l)]
                                                             : std::numeric_limits<double>::quiet_NaN();
        metrics_ << ',' << g9(v);
    }
    metrics_ << "\n";
    metrics_.flush();
    timing_ << log.epoch << ',' << g9(log.seconds) << "\n";
    timing_.flush();
}

void RunWriter::save_model(const Architecture& arch, const ModelParams& params, const std::string& filename) {
    save_checkpoint(arch, params, dir_ / filename);
}

TrainResult train(const TrainConfig& config, const Dataset& data, RunWriter* writer) {
    TrainLoop loop(config, data);
    std::vector<EpochLog> logs;
    logs.reserve(static_cast<size_t>(config.epochs));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = Clock::now();
        const double lr = epoch_learning_rate(config, epoch);
        const auto plans = loop.epoch_plans();

        double ce_sum = 0.0;
        std::int64_t correct = 0, rows = 0, degenerate = 0;
        std::vector<double> inv_sum(static_cast<size_t>(config.inv_layers), 0.0);
        std::vector<std::int64_t> inv_count(static_cast<size_t>(config.inv_layers), 0);

        for (std::int64_t s = 0; s < static_cast<std::int64_t>(plans.size()); ++s) {
            const bool monitor = config.monitor_invariance && (s % config.monitor_every == 0);
            auto stats = loop.step(plans[static_cast<size_t>(s)], epoch, s, lr, monitor);
            ce_sum += stats.cross_entropy;
            degenerate += stats.degenerate;
            correct += stats.correct;
            rows += plans[static_cast<size_t>(s)].batch_size();
            for (size_t l = 0; l < inv_sum.size(); ++l) {
                if (!std::isnan(stats.inv_loss[l])) {
                    inv_sum[l] += stats.inv_loss[l];
                    ++inv_count[l];
                }
            }
        }

        EpochLog log;
        log.epoch = epoch;
        log.learning_rate = lr;
        log.cross_entropy = ce_sum / static_cast<double>(plans.size());
        log.train_accuracy = static_cast<double>(correct) / static_cast<double>(rows);
        log.degenerate_skips = degenerate;
        log.inv_loss.resize(static_cast<size_t>(config.inv_layers));
        for (size_t l = 0; l < inv_sum.size(); ++l)
            log.inv_loss[l] = inv_count[l] > 0 ? inv_sum[l] / static_cast<double>(inv_count[l])
                                               : std::numeric_limits<double>::quiet_NaN();
        log.seconds = seconds_since(t0);
        logs.push_back(log);
        if (writer) {
            writer->append(log);
            if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0)
                writer->save_model(loop.arch(), loop.net().params(), strf("checkpoint_epoch%04d.ckpt", epoch + 1));
        }
    }

    if (writer) writer->save_model(loop.arch(), loop.net().params(), "checkpoint_final.ckpt");
    return {loop.arch(), loop.net().params(), std::move(logs)};
}

double measure_overhead(const TrainConfig& config, const Dataset& data, int n_steps) {
    if (n_steps < 20) throw ContractError("measure_overhead: need at least 20 timed steps");

    auto median_step_seconds = [&](bool invariance_mode) {
        TrainConfig cfg = config;
        cfg.invariance_mode = invariance_mode;
        cfg.monitor_invariance = false;  // measure the optimization step alone
        if (!invariance_mode) cfg.m_copies = 1;
        TrainLoop loop(cfg, data);

        const int warmup = 5;
        std::vector<double> times;
        times.reserve(static_cast<size_t>(n_steps));
        int done = 0, epoch = 0;
        while (done < n_steps + warmup) {
            const auto plans = loop.epoch_plans();
            const double lr = epoch_learning_rate(cfg, epoch);
            for (std::int64_t s = 0; s < static_cast<std::int64_t>(plans.size()) && done < n_steps + warmup;
                 ++s, ++done) {
                const auto t0 = Clock::now();
                loop.step(plans[static_cast<size_t>(s)], epoch, s, lr, false);
                if (done >= warmup) times.push_back(seconds_since(t0));
            }
            ++epoch;
        }
        std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2), times.end());
        return times[times.size() / 2];
    };

    const double baseline = median_step_seconds(false);
    const double invariance = median_step_seconds(true);
    return invariance / baseline;
}

}  // namespace auginv
