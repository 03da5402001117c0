// Configuration parsing plus end-to-end CLI runs through the built binary
// (path in AUGINV_BIN, set by ctest).

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "auginv/config.hpp"
#include "auginv/errors.hpp"
#include "auginv/evaluator.hpp"
#include "auginv/util.hpp"
#include "support/helpers.hpp"

using namespace auginv;
namespace fs = std::filesystem;

namespace {

std::string binary_path() {
    const char* bin = std::getenv("AUGINV_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "AUGINV_BIN must point at the CLI binary");
    return bin;
}

int run_cli(const std::string& args) {
    std::string cmd = binary_path() + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string set_flags(const fs::path& data, const fs::path& out, const std::string& run_id) {
    return strf(
        "--set data_dir=%s --set out_dir=%s --set run_id=%s --set epochs=2 --set train_subset=512 "
        "--set width_mult=0.25 --set batch_size=64 --set threads=2 --set monitor_every=4",
        data.c_str(), out.c_str(), run_id.c_str());
}

int count_lines(const fs::path& p) {
    std::ifstream in(p);
    int n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

}  // namespace

TEST_CASE("config: unknown keys and bad values are rejected with locations") {
    CHECK_THROWS_WITH_AS(parse_config_text("nonsense_key = 1\n", "test.cfg"),
                         doctest::Contains("test.cfg:1"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("epochs = banana\n", "test.cfg"), doctest::Contains("epochs"),
                         ConfigError);
    CHECK_THROWS_AS(parse_config_text("epochs 5\n", "t"), ConfigError);
    RunConfig cfg = parse_config_text("epochs = 3 # trailing comment\nlr_milestones = 1,2\n", "t");
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.train.lr_milestones == std::vector<int>{1, 2});
}

TEST_CASE("config: snapshot round trips") {
    RunConfig cfg;
    cfg.train.epochs = 17;
    cfg.train.invariance_mode = false;
    cfg.train.scheme.rotation_deg = 12.5;
    cfg.eval_references = 42;
    std::string snap = config_snapshot(cfg);
    RunConfig back = parse_config_text(snap, "snapshot");
    CHECK(config_snapshot(back) == snap);
    CHECK(back.train.epochs == 17);
    CHECK(back.eval_references == 42);
    CHECK(back.resolved_run_id() == "baseline-s1");
}

TEST_CASE("config: override list and validation") {
    RunConfig cfg = parse_run_config(nullptr, {"epochs=9", "alpha=0.2"});
    CHECK(cfg.train.epochs == 9);
    CHECK(cfg.train.alpha == doctest::Approx(0.2));
    CHECK_THROWS_AS(parse_run_config(nullptr, {"no_such=1"}), ConfigError);
    CHECK_THROWS_AS(parse_run_config(nullptr, {"epochs"}), ConfigError);
    CHECK_THROWS_AS(parse_run_config(nullptr, {"run_id=bad/name"}), ConfigError);
}

TEST_CASE("cli: full train/eval/report flow on a small run") {
    const fs::path data = testsupport::shared_data_dir();
    const fs::path out = testsupport::unique_temp_dir("cliflow");

    SUBCASE("unknown config key exits 2 without writing outputs") {
        CHECK(run_cli("train --set bogus_key=1 --set out_dir=" + (out / "none").string()) == 2);
        CHECK_FALSE(fs::exists(out / "none"));
    }

    SUBCASE("train, re-train guard, eval, report") {
        REQUIRE(run_cli("train " + set_flags(data, out, "run-a")) == 0);
        const fs::path run_a = out / "run-a";
        CHECK(fs::exists(run_a / "run.meta"));
        CHECK(fs::exists(run_a / "timing.csv"));
        CHECK(count_lines(run_a / "metrics.csv") == 3);  // header + 2 epochs
        // a second run into the same directory is refused
        CHECK(run_cli("train " + set_flags(data, out, "run-a")) == 2);

        // baseline mode switch works off the same flags
        REQUIRE(run_cli("train " + set_flags(data, out, "run-b") + " --set invariance_mode=false") == 0);
        RunConfig meta = parse_config_text(read_text_file(out / "run-b" / "run.meta"), "run.meta");
        CHECK_FALSE(meta.train.invariance_mode);

        // eval with a small protocol; row count is (1+9) * subset * T
        REQUIRE(run_cli("eval --checkpoint " + (run_a / "checkpoint_final.ckpt").string() + " --config " +
                        (run_a / "run.meta").string() +
                        " --set test_subset=60 --set eval_references=20 --set eval_transforms=2") == 0);
        InvarianceReport rep = read_invariance_csv(run_a / "invariance.csv");
        CHECK(rep.images == 60);
        CHECK(rep.transforms == 2);
        std::int64_t data_rows = 0;
        for (const auto& l : rep.sigma) data_rows += static_cast<std::int64_t>(l.size());
        CHECK(data_rows == 10 * 60 * 2);

        // zero-range scheme: every sigma is exactly one
        REQUIRE(run_cli("eval --checkpoint " + (run_a / "checkpoint_final.ckpt").string() + " --config " +
                        (run_a / "run.meta").string() + " --out " + (out / "eval-zero").string() +
                        " --set test_subset=40 --set eval_references=10 --set eval_transforms=1"
                        " --set flip_prob=0 --set rotation_deg=0 --set translate_frac=0 --set scale_delta=0"
                        " --set shear_deg=0 --set contrast_delta=0 --set brightness_delta=0") == 0);
        InvarianceReport zero = read_invariance_csv(out / "eval-zero" / "invariance.csv");
        for (const auto& layer : zero.sigma)
            for (float s : layer) CHECK(s == doctest::Approx(1.0));

        // eval on run-b too, then a two-run report
        REQUIRE(run_cli("eval --checkpoint " + (out / "run-b" / "checkpoint_final.ckpt").string() + " --config " +
                        (out / "run-b" / "run.meta").string() +
                        " --set test_subset=60 --set eval_references=20 --set eval_transforms=2") == 0);
        REQUIRE(run_cli("report " + run_a.string() + " " + (out / "run-b").string() + " --out " +
                        (out / "rep").string()) == 0);
        CHECK(count_lines(out / "rep" / "report_sigma_compare.csv") == 11);  // header + 10 layers
        CHECK(fs::exists(out / "rep" / "report_dynamics.csv"));

        // reported medians equal an independent recomputation from the csv
        InvarianceReport reread = read_invariance_csv(run_a / "invariance.csv");
        std::ifstream cmp(out / "rep" / "report_sigma_compare.csv");
        std::string line;
        std::getline(cmp, line);  // header: layer,median_run-a,median_run-b
        int layer = 0;
        while (std::getline(cmp, line)) {
            auto fields = split(line, ',');
            REQUIRE(fields.size() == 3);
            std::vector<double> values(reread.sigma[static_cast<size_t>(layer)].begin(),
                                       reread.sigma[static_cast<size_t>(layer)].end());
            CHECK(std::stod(fields[1]) == doctest::Approx(quantile(values, 0.5)).epsilon(1e-9));
            ++layer;
        }
        CHECK(layer == 10);

        // single-run report degrades to a single-model summary
        CHECK(run_cli("report " + run_a.string() + " --out " + (out / "rep-single").string()) == 0);
        CHECK(fs::exists(out / "rep-single" / "report_sigma_quantiles.csv"));
    }

    SUBCASE("missing dataset exits 3") {
        CHECK(run_cli("train --set data_dir=/nonexistent-data --set out_dir=" + out.string()) == 3);
    }

    SUBCASE("corrupt checkpoint exits 4") {
        const fs::path bad = out / "bad.ckpt";
        write_text_file(bad, "not a checkpoint\n");
        CHECK(run_cli("eval --checkpoint " + bad.string() + " --set data_dir=" + data.string()) == 4);
    }

    SUBCASE("report on a missing run dir exits 3") {
        CHECK(run_cli("report " + (out / "missing-run").string()) == 3);
    }

    fs::remove_all(out);
}

TEST_CASE("cli: gradcheck subcommand passes") {
    CHECK(run_cli("gradcheck") == 0);
}
