#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace posebench::gradcheck {

// Finite-difference verification of every analytic gradient in the library:
// each loss in the losses module plus the whole model (forward + losses +
// backward through both stacks). Central differences against the analytic
// value; relative error |a - fd| / max(|a|, |fd|, 0.01).

struct CheckResult {
    std::string name;
    int instances = 0;
    std::int64_t coords = 0; // coordinates compared in total
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct Options {
    std::uint64_t seed = 1;
    int instances = 100;           // random instances per check
    double fd_step_loss = 1e-6;    // central-difference h for loss-level checks
    double fd_step_model = 1e-5;   // h for whole-model parameter checks
    double tol_loss = 1e-6;
    double tol_model = 1e-5;
    int model_coords = 12;         // sampled parameter coordinates per model instance
    bool inject_sign_flip = false; // negative control: corrupt one analytic gradient
};

std::vector<CheckResult> run_all(const Options& opt);

bool all_passed(const std::vector<CheckResult>& results);

// One line per check: "[PASS|FAIL] name  max_rel=... tol=... ..."
void print_results(std::ostream& out, const std::vector<CheckResult>& results);

} // namespace posebench::gradcheck
