// Experiment CLI: train / eval / report / gradcheck.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "auginv/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"data augmentation invariance training and evaluation"};
    app.require_subcommand(1);

    std::optional<std::string> config_file;
    std::vector<std::string> overrides;
    std::string checkpoint;
    std::optional<std::string> out_dir;
    std::vector<std::string> run_dirs;
    std::uint64_t gradcheck_seed = 20240915;

    CLI::App* train = app.add_subcommand("train", "train one run (baseline or invariance mode)");
    train->add_option("--config", config_file, "key=value configuration file");
    train->add_option("--set", overrides, "override one key, e.g. --set invariance_mode=false")
        ->take_all();

    CLI::App* eval = app.add_subcommand("eval", "measure per-layer invariance scores and accuracy");
    eval->add_option("--checkpoint", checkpoint, "model checkpoint to evaluate")->required();
    eval->add_option("--config", config_file, "configuration file (a run.meta works)");
    eval->add_option("--set", overrides, "override one key")->take_all();
    eval->add_option("--out", out_dir, "output directory (default: the checkpoint's directory)");

    CLI::App* report = app.add_subcommand("report", "comparison tables and plot-ready CSVs from run dirs");
    report->add_option("runs", run_dirs, "run directories")->required()->expected(-1);
    report->add_option("--out", out_dir, "output directory (default: the first run directory)");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "run the gradient and loss verification suites");
    gradcheck->add_option("--seed", gradcheck_seed, "seed for the randomized checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : auginv::kExitConfig;
    }

    const std::filesystem::path config_path = config_file.value_or("");
    const std::filesystem::path* config = config_file ? &config_path : nullptr;
    const std::filesystem::path out_path = out_dir.value_or("");
    const std::filesystem::path* out = out_dir ? &out_path : nullptr;

    if (train->parsed()) return auginv::cmd_train(config, overrides);
    if (eval->parsed()) return auginv::cmd_eval(checkpoint, config, overrides, out);
    if (report->parsed()) {
        std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
        return auginv::cmd_report(dirs, out);
    }
    if (gradcheck->parsed()) return auginv::cmd_gradcheck(gradcheck_seed);
    return auginv::kExitConfig;
}
