#include "starn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace starn {

PreparedData prepare(std::vector<AccidentRecord> records, RoadGraph graph, std::uint64_t seed, SplitRatios ratios) {
    PreparedData d;
    d.records = std::move(records);
    d.graph = std::move(graph);
    d.split = stratified_split(d.records, ratios, seed);
    d.features = build_features(d.records, d.graph, d.split.train_ids);
    d.train_rows = d.features.rows_for(d.split.train_ids);
    d.val_rows = d.features.rows_for(d.split.val_ids);
    d.test_rows = d.features.rows_for(d.split.test_ids);
    return d;
}

RunResult run_variant(const PreparedData& data, const std::string& variant, const ModelConfig& base_model,
                      TrainConfig train, const EpochCallback& on_epoch) {
    ModelConfig model = base_model;
    model.ablation = ablation_from_name(variant);
    RunResult r;
    r.variant = variant;
    r.seed = train.seed;
    r.fit = fit(data.graph, data.features, data.train_rows, data.val_rows, model, train, on_epoch);
    r.best_val_macro_f1 = r.fit.best.best_score;
    const auto ginput = make_graph_input<float>(data.graph, data.features.node_spatial);
    if (!data.test_rows.empty()) r.test = evaluate_rows(r.fit.best, ginput, data.features, data.test_rows);
    return r;
}

namespace {

std::pair<int, int> grid_for(int nodes) {
    int rows = static_cast<int>(std::sqrt(static_cast<double>(nodes)));
    while (rows > 1 && nodes % rows != 0) --rows;
    return {rows, nodes / rows};
}

}  // namespace

BenchResult run_bench(const std::vector<int>& node_counts, std::uint64_t seed, int repeats, const ModelConfig& model) {
    if (node_counts.size() < 2) throw ConfigError("bench: need at least two graph sizes");
    if (repeats < 1) throw ConfigError("bench: repeats must be >= 1");
    BenchResult res;
    const auto params = init_params<float>(model, seed);
    const ModelBuffers<float> buffers(model.hidden);
    for (int n : node_counts) {
        if (n < 4) throw ConfigError("bench: graph sizes must be >= 4");
        SynthConfig sc;
        std::tie(sc.grid_rows, sc.grid_cols) = grid_for(n);
        const auto synth = synth_generate(sc, seed);
        GraphConfig gc;
        gc.lambda_min = 0.0;
        gc.repair = false;
        const auto built = build_graph(synth.records, gc);
        std::vector<std::string> ids;
        for (const auto& r : synth.records) ids.push_back(r.id);
        const auto fs = build_features(synth.records, built.graph, ids);
        const auto ginput = make_graph_input<float>(built.graph, fs.node_spatial);
        std::vector<int> rows(fs.num_records());
        std::iota(rows.begin(), rows.end(), 0);
        const auto batch = make_record_batch<float>(fs, rows);

        predict_proba(params, buffers, model, ginput, batch);  // warm-up
        std::vector<double> times;
        for (int k = 0; k < repeats; ++k) {
            const auto t0 = std::chrono::steady_clock::now();
            predict_proba(params, buffers, model, ginput, batch);
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        std::sort(times.begin(), times.end());
        BenchRow row;
        row.nodes = static_cast<int>(built.graph.num_nodes());
        row.edges = built.graph.edges.size();
        row.records = fs.num_records();
        row.millis = times[times.size() / 2];
        res.rows.push_back(row);
    }
    std::vector<double> x, y;
    for (const auto& r : res.rows) {
        x.push_back(r.nodes);
        y.push_back(r.millis);
    }
    res.fit = metrics::scaling_fit(x, y);
    return res;
}

}  // namespace starn
