#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace auginv {

struct CheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Central finite-difference checks of the analytic gradients, in 64-bit
// precision, one small network per layer type (3x3, 3x3 stride-2, 1x1, ReLU
// stack, global pool + softmax cross-entropy) plus the full composite
// objective with the invariance terms on a reduced two-layer network.
std::vector<CheckResult> run_gradient_checks(std::uint64_t seed);

// Closed-form / brute-force cross-checks of the loss primitives.
std::vector<CheckResult> run_objective_checks(std::uint64_t seed);

}  // namespace auginv
