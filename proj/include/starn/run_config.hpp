#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "starn/graphbuild.hpp"
#include "starn/ingest.hpp"
#include "starn/model.hpp"
#include "starn/train.hpp"

namespace starn {

struct RunPaths {
    // Empty paths resolve to fixed names inside output_dir.
    std::string data;        // accidents.csv
    std::string graph;       // graph.json
    std::string checkpoint;  // model.ckpt
    std::string output_dir = "starn_out";
};

struct BenchOptions {
    std::vector<int> sizes{100, 200, 400, 800};
    int repeats = 5;
};

struct GradcheckConfig {
    double h = 1e-5;
    double op_threshold = 1e-6;
    double model_threshold = 1e-5;
    std::size_t model_coords_per_tensor = 12;
};

struct PredictOptions {
    std::string input;             // records CSV to score
    std::string output;            // predictions.csv in output_dir when empty
    double assign_radius_m = 0.0;  // 0: the graph's DBSCAN epsilon
};

struct RunConfig {
    std::uint64_t seed = 42;
    RunPaths paths;
    SynthConfig synth;
    GraphConfig graph;
    SplitRatios split;
    ModelConfig model;
    TrainConfig train;
    BenchOptions bench;
    GradcheckConfig gradcheck;
    PredictOptions predict;

    // Fills empty paths and copies the root seed into the training config.
    void resolve();
    void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
// Overlays the fields present in j onto c; unknown fields are rejected.
void merge_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

// Throws DataError naming `what` when the file is missing.
void require_file(const std::filesystem::path& path, const std::string& what);

}  // namespace starn
