#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "starn/autodiff.hpp"

namespace starn::ad {

struct GradCheckOptions {
    double h = 1e-5;
    // Coordinates checked per input tensor; 0 checks all of them.
    std::size_t max_coords_per_input = 0;
    std::uint64_t seed = 0;
    // Test hook: perturbs the analytic gradient of the first probed input.
    bool corrupt_gradient = false;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    // Coordinates whose ±h probe crossed a kink (relu at 0, clamp boundary).
    std::size_t excluded = 0;
    std::size_t worst_input = 0;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

using ScalarFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Central differences (f(x+h) − f(x−h)) / 2h against reverse-mode gradients.
// Relative error per coordinate is |a − n| / max(1, |a|, |n|).
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& opts = {});

}  // namespace starn::ad
