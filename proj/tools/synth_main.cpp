// Writes a synthetic dataset in the CIFAR-10 binary layout, for environments
// without the real files and for hermetic test fixtures.

#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <string>

#include "auginv/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic CIFAR-10-format dataset generator"};
    std::string dir = "data/synthetic-cifar10";
    std::uint64_t seed = 7;
    app.add_option("--out", dir, "output directory");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    auginv::write_synthetic_cifar10(dir, seed);
    std::printf("wrote 5 train files + test_batch.bin to %s (seed %llu)\n", dir.c_str(),
                static_cast<unsigned long long>(seed));
    return 0;
}
