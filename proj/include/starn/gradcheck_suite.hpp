#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "starn/gradcheck.hpp"
#include "starn/model.hpp"

namespace starn {

struct SuiteEntry {
    std::string name;
    ad::GradCheckResult result;
    double threshold = 0.0;

    bool passed() const { return result.max_rel_error <= threshold; }
};

struct SuiteOptions {
    std::uint64_t seed = 7;
    double h = 1e-5;
    double op_threshold = 1e-6;
    double model_threshold = 1e-5;
    std::size_t model_coords_per_tensor = 12;
    bool corrupt_gradient = false;
};

// Small fixed graph (6 nodes, ring plus a chord, self-loops) and 8 records
// used by the full-model gradient check.
GraphInput<double> toy_graph_input(std::uint64_t seed);
RecordBatch<double> toy_record_batch(std::uint64_t seed, std::size_t num_nodes);

// Finite-difference checks of every tensor op, then the full training loss
// (focal + L2, training mode) of every model variant on the toy graph.
std::vector<SuiteEntry> run_gradcheck_suite(const SuiteOptions& opts = {});

}  // namespace starn
