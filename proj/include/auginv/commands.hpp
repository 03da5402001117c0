#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace auginv {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;    // invalid configuration
inline constexpr int kExitMissing = 3;   // missing input (dataset, run files)
inline constexpr int kExitArtifact = 4;  // checkpoint/artifact mismatch
inline constexpr int kExitNumeric = 5;   // numeric failure

// Trains one run into <out_dir>/<run_id>/: run.meta (resolved config
// snapshot), metrics.csv, timing.csv, checkpoints. Validates the full
// configuration before touching the filesystem.
int cmd_train(const std::filesystem::path* config_file, const std::vector<std::string>& overrides);

// Evaluates a checkpoint: invariance.csv + accuracy.txt into `out_dir`
// (default: the checkpoint's directory). The config (typically the run's
// run.meta) must describe the same architecture as the checkpoint.
int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path* config_file,
             const std::vector<std::string>& overrides, const std::filesystem::path* out_dir);

// Cross-run comparison tables and plot-ready long-format CSVs, written into
// `out_dir` (default: the first run directory).
int cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path* out_dir);

// Runs the gradient / loss-primitive verification suites; prints one
// pass/fail line per check.
int cmd_gradcheck(std::uint64_t seed);

}  // namespace auginv
