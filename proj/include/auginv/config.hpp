#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "auginv/trainer.hpp"

namespace auginv {

// Complete resolved configuration of a run. Parsed from a plain-text
// key=value file ('#' comments) plus --set key=value overrides; unknown keys
// are rejected with their source location before any output is written.
// run.meta is exactly this snapshot, so eval/report can be pointed at it.
struct RunConfig {
    std::string data_dir = "data/cifar-10-batches-bin";
    std::string out_dir = "runs";
    std::string run_id;  // empty -> "<baseline|invariance>-s<base_seed>"
    TrainConfig train;
    int eval_transforms = 5;
    int eval_references = 200;
    std::uint64_t eval_seed = 1;
    std::int64_t test_subset = 0;
    int eval_batch = 128;

    std::string resolved_run_id() const;
    std::filesystem::path run_dir() const;
    void validate() const;  // throws ConfigError
};

// All recognized keys, in the order they appear in snapshots.
std::vector<std::string> config_keys();

// Sets one key from its text form; throws ConfigError for unknown keys or
// unparsable values, prefixed with `where` (e.g. "base.cfg:12" or "--set").
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value, const std::string& where);

RunConfig parse_run_config(const std::filesystem::path* file, const std::vector<std::string>& overrides);

// Full key=value snapshot of every key (the run.meta payload).
std::string config_snapshot(const RunConfig& cfg);
RunConfig parse_config_text(const std::string& text, const std::string& source_name);

}  // namespace auginv
