#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "starn/features.hpp"
#include "starn/graphbuild.hpp"
#include "starn/ingest.hpp"
#include "starn/metrics.hpp"
#include "starn/model.hpp"
#include "starn/train.hpp"

namespace starn {

// Records, graph, split and features ready for training.
struct PreparedData {
    std::vector<AccidentRecord> records;
    RoadGraph graph;
    DatasetSplit split;
    FeatureSet features;
    std::vector<int> train_rows;
    std::vector<int> val_rows;
    std::vector<int> test_rows;
};

PreparedData prepare(std::vector<AccidentRecord> records, RoadGraph graph, std::uint64_t seed,
                     SplitRatios ratios = {});

struct RunResult {
    std::string variant;
    std::uint64_t seed = 0;
    FitResult fit;
    double best_val_macro_f1 = 0.0;
    metrics::MetricsReport test;
};

RunResult run_variant(const PreparedData& data, const std::string& variant, const ModelConfig& base_model,
                      TrainConfig train, const EpochCallback& on_epoch = {});

struct BenchRow {
    int nodes = 0;
    std::size_t edges = 0;
    std::size_t records = 0;
    double millis = 0.0;  // median eval-mode forward time
};

struct BenchResult {
    std::vector<BenchRow> rows;
    metrics::LinearFit fit;
};

// Synthetic graphs of roughly the requested node counts; times a full
// eval-mode forward pass over every record.
BenchResult run_bench(const std::vector<int>& node_counts, std::uint64_t seed, int repeats = 5,
                      const ModelConfig& model = {});

}  // namespace starn
