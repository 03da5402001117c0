#include "auginv/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>

#include "auginv/config.hpp"
#include "auginv/dataset.hpp"
#include "auginv/errors.hpp"
#include "auginv/evaluator.hpp"
#include "auginv/gradcheck.hpp"
#include "auginv/network.hpp"
#include "auginv/trainer.hpp"
#include "auginv/util.hpp"

namespace auginv {

namespace {

// Maps thrown domain errors onto the documented exit codes.
template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const DataError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return kExitMissing;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "checkpoint error: %s\n", e.what());
        return kExitArtifact;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    }
}

void write_run_meta(const RunConfig& cfg, const std::filesystem::path& dir) {
    std::string meta = "# resolved configuration snapshot; parseable as a config file\n";
    meta += config_snapshot(cfg);
    write_text_file(dir / "run.meta", meta);
}

// --- report helpers -------------------------------------------------------

struct RunData {
    std::string id;
    bool invariance_mode = false;
    int inv_layers = 0;
    std::vector<std::vector<double>> inv_by_epoch;  // [epoch][layer]
    std::optional<InvarianceReport> sigma;
};

RunData load_run(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "run.meta") || !std::filesystem::exists(dir / "metrics.csv"))
        throw DataError("run directory is missing run.meta/metrics.csv: " + dir.string());
    RunConfig cfg = parse_config_text(read_text_file(dir / "run.meta"), "run.meta");
    RunData run;
    run.id = cfg.resolved_run_id();
    run.invariance_mode = cfg.train.invariance_mode;
    run.inv_layers = cfg.train.inv_layers;

    std::ifstream in(dir / "metrics.csv");
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty metrics.csv in " + dir.string());
    const auto header = split(line, ',');
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != header.size()) throw DataError("malformed metrics.csv row: " + line);
        std::vector<double> inv;
        for (size_t c = 0; c < header.size(); ++c)
            if (header[c].rfind("inv_conv", 0) == 0) inv.push_back(std::stod(fields[c]));
        run.inv_by_epoch.push_back(std::move(inv));
    }
    if (std::filesystem::exists(dir / "invariance.csv"))
        run.sigma = read_invariance_csv(dir / "invariance.csv");
    return run;
}

void write_sigma_tables(const std::vector<RunData>& runs, const std::filesystem::path& out) {
    std::string summary = "run,layer,pooling,q1,median,q3\n";
    for (const RunData& run : runs) {
        if (!run.sigma) continue;
        for (const LayerSummary& s : run.sigma->summaries) {
            summary += run.id + ',' + std::to_string(s.layer) + ",all," + g9(s.q1) + ',' + g9(s.median) + ',' +
                       g9(s.q3) + "\n";
            summary += run.id + ',' + std::to_string(s.layer) + ",per_image,," + g9(s.median_pooled) + ",\n";
        }
    }
    write_text_file(out / "report_sigma_quantiles.csv", summary);

    // Wide comparison table: one row per layer, one median column per run.
    std::string compare = "layer";
    for (const RunData& run : runs)
        if (run.sigma) compare += ",median_" + run.id;
    compare += "\n";
    size_t max_layers = 0;
    for (const RunData& run : runs)
        if (run.sigma) max_layers = std::max(max_layers, run.sigma->summaries.size());
    for (size_t l = 0; l < max_layers; ++l) {
        compare += std::to_string(l);
        for (const RunData& run : runs) {
            if (!run.sigma) continue;
            compare += ',';
            if (l < run.sigma->summaries.size()) compare += g9(run.sigma->summaries[l].median);
        }
        compare += "\n";
    }
    write_text_file(out / "report_sigma_compare.csv", compare);

    std::printf("per-layer median invariance score (all (image,transform) points)\n");
    std::printf("%6s", "layer");
    for (const RunData& run : runs)
        if (run.sigma) std::printf("  %20s", run.id.c_str());
    std::printf("\n");
    for (size_t l = 0; l < max_layers; ++l) {
        std::printf("%6zu", l);
        for (const RunData& run : runs)
            if (run.sigma)
                std::printf("  %20s",
                            l < run.sigma->summaries.size() ? g9(run.sigma->summaries[l].median).c_str() : "-");
        std::printf("\n");
    }
}

void write_dynamics(const std::vector<RunData>& runs, const std::filesystem::path& out) {
    // Long format for the loss-dynamics figure; epoch_axis_quadratic holds
    // sqrt(epoch+1) so plotting against it reproduces the quadratically
    // scaled epoch axis.
    std::string csv = "run,epoch,epoch_axis_quadratic,layer,inv_loss\n";
    for (const RunData& run : runs) {
        for (size_t e = 0; e < run.inv_by_epoch.size(); ++e) {
            for (size_t l = 0; l < run.inv_by_epoch[e].size(); ++l) {
                csv += run.id + ',' + std::to_string(e) + ',' + g9(std::sqrt(static_cast<double>(e) + 1.0)) + ',' +
                       std::to_string(l + 1) + ',' + g9(run.inv_by_epoch[e][l]) + "\n";
            }
        }
    }
    write_text_file(out / "report_dynamics.csv", csv);
}

}  // namespace

int cmd_train(const std::filesystem::path* config_file, const std::vector<std::string>& overrides) {
    return guarded([&]() {
        RunConfig cfg = parse_run_config(config_file, overrides);
        Dataset data = load_cifar10(cfg.data_dir);

        const std::filesystem::path dir = cfg.run_dir();
        if (std::filesystem::exists(dir / "metrics.csv"))
            throw ConfigError("run directory already holds a run: " + dir.string() +
                              " (choose a different run_id)");
        std::filesystem::create_directories(dir);
        write_run_meta(cfg, dir);

        RunWriter writer(dir, cfg.train.inv_layers);
        std::printf("training run '%s' (%s mode, %d epochs) -> %s\n", cfg.resolved_run_id().c_str(),
                    cfg.train.invariance_mode ? "invariance" : "baseline", cfg.train.epochs, dir.string().c_str());
        TrainResult result = train(cfg.train, data, &writer);
        const EpochLog& last = result.logs.back();
        std::printf("done: cross_entropy %.4f train_accuracy %.4f (%d epochs)\n", last.cross_entropy,
                    last.train_accuracy, cfg.train.epochs);
        return kExitOk;
    });
}

int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path* config_file,
             const std::vector<std::string>& overrides, const std::filesystem::path* out_dir) {
    return guarded([&]() {
        RunConfig cfg = parse_run_config(config_file, overrides);
        auto [arch, params] = load_checkpoint(checkpoint);
        const Architecture expected = Architecture::all_cnn_c(cfg.train.width_mult);
        if (!(arch == expected))
            throw CheckpointError(strf("checkpoint architecture does not match width_mult %g", cfg.train.width_mult));

        Dataset data = load_cifar10(cfg.data_dir);
        Network<float> net(arch);
        net.params() = std::move(params);
        net.threads = cfg.train.threads;

        EvalConfig ecfg;
        ecfg.transforms = cfg.eval_transforms;
        ecfg.references = cfg.eval_references;
        ecfg.seed = cfg.eval_seed;
        ecfg.test_subset = cfg.test_subset;
        ecfg.batch = cfg.eval_batch;
        ecfg.threads = cfg.train.threads;
        ecfg.scheme = cfg.train.scheme;

        const std::filesystem::path dir = out_dir != nullptr ? *out_dir : checkpoint.parent_path();
        std::filesystem::create_directories(dir);

        InvarianceReport report = evaluate_invariance(net, data.test, data.stats, ecfg);
        write_invariance_csv(report, dir / "invariance.csv");
        double accuracy = evaluate_accuracy(net, data.test, data.stats, ecfg.batch, ecfg.test_subset);
        std::string acc_text = "accuracy = " + g9(accuracy) + "\n";
        acc_text += "images = " + std::to_string(report.images) + "\n";
        acc_text += "checkpoint = " + checkpoint.string() + "\n";
        write_text_file(dir / "accuracy.txt", acc_text);

        std::printf("evaluated %lld images: accuracy %.4f; per-layer median sigma:",
                    static_cast<long long>(report.images), accuracy);
        for (const LayerSummary& s : report.summaries) std::printf(" %d:%.3f", s.layer, s.median);
        std::printf("\n");
        return kExitOk;
    });
}

int cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path* out_dir) {
    return guarded([&]() {
        if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
        std::vector<RunData> runs;
        for (const auto& dir : run_dirs) runs.push_back(load_run(dir));
        const std::filesystem::path out = out_dir != nullptr ? *out_dir : run_dirs.front();
        std::filesystem::create_directories(out);
        write_sigma_tables(runs, out);
        write_dynamics(runs, out);
        std::printf("report written to %s\n", out.string().c_str());
        return kExitOk;
    });
}

int cmd_gradcheck(std::uint64_t seed) {
    return guarded([&]() {
        bool all_pass = true;
        auto print = [&all_pass](const CheckResult& r) {
            std::printf("%-32s %s  (max err %.3g, tol %.1g)\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                        r.max_rel_err, r.tolerance);
            all_pass = all_pass && r.pass;
        };
        for (const CheckResult& r : run_objective_checks(seed)) print(r);
        for (const CheckResult& r : run_gradient_checks(seed)) print(r);
        if (!all_pass) {
            std::fprintf(stderr, "verification failed\n");
            return kExitNumeric;
        }
        return kExitOk;
    });
}

}  // namespace auginv
