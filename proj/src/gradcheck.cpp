#include "starn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace starn::ad {

namespace {

struct Probe {
    double value;
    std::uint64_t kinks;
};

Probe evaluate(const ScalarFn& f, const std::vector<Tensor<double>>& inputs) {
    Tape<double> tape;
    tape.set_track_kinks(true);
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (const auto& x : inputs) vars.push_back(tape.leaf(x));
    const Var<double> out = f(tape, vars);
    if (out.value().size() != 1) throw DimensionError("grad_check: function must return a single value");
    const double v = out.value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return {v, tape.kink_signature()};
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                           const GradCheckOptions& opts) {
    if (!(opts.h > 0.0)) throw ConfigError("grad_check: step h must be positive");

    Tape<double> tape;
    tape.set_track_kinks(true);
    std::vector<Var<double>> vars;
    for (const auto& x : inputs) vars.push_back(tape.leaf(x));
    const Var<double> out = f(tape, vars);
    if (out.value().size() != 1) throw DimensionError("grad_check: function must return a single value");
    if (!std::isfinite(out.value()[0])) throw NumericError("grad_check: non-finite function value");
    const std::uint64_t base_kinks = tape.kink_signature();
    tape.backward(out);

    std::vector<Tensor<double>> analytic;
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
    std::mt19937_64 eng(opts.seed);
    std::vector<std::vector<std::size_t>> checked_coords(inputs.size());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto& coords = checked_coords[k];
        coords.resize(inputs[k].size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (opts.max_coords_per_input > 0 && coords.size() > opts.max_coords_per_input) {
            std::shuffle(coords.begin(), coords.end(), eng);
            coords.resize(opts.max_coords_per_input);
            std::sort(coords.begin(), coords.end());
        }
    }
    if (opts.corrupt_gradient) {
        // offsets every probed coordinate of the first input
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            if (checked_coords[k].empty()) continue;
            for (std::size_t i : checked_coords[k]) analytic[k][i] += 1.0 + std::abs(analytic[k][i]);
            break;
        }
    }

    GradCheckResult res;
    std::vector<Tensor<double>> probe = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i : checked_coords[k]) {
            const double x0 = inputs[k][i];
            probe[k][i] = x0 + opts.h;
            const Probe up = evaluate(f, probe);
            probe[k][i] = x0 - opts.h;
            const Probe down = evaluate(f, probe);
            probe[k][i] = x0;
            if (up.kinks != base_kinks || down.kinks != base_kinks) {
                ++res.excluded;
                continue;
            }
            const double numeric = (up.value - down.value) / (2.0 * opts.h);
            const double a = analytic[k][i];
            const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            ++res.checked;
            if (err > res.max_rel_error || res.checked == 1) {
                res.max_rel_error = std::max(res.max_rel_error, err);
                res.worst_input = k;
                res.worst_coord = i;
                res.worst_analytic = a;
                res.worst_numeric = numeric;
            }
        }
    }
    return res;
}

}  // namespace starn::ad
