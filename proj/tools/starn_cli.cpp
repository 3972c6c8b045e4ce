#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "starn/error.hpp"
#include "starn/features.hpp"
#include "starn/gradcheck_suite.hpp"
#include "starn/graphbuild.hpp"
#include "starn/ingest.hpp"
#include "starn/metrics.hpp"
#include "starn/pipeline.hpp"
#include "starn/run_config.hpp"
#include "starn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace starn {
namespace {

struct Overrides {
    RunConfig defaults;
    std::string config_path;
    bool emit_config = false;

    std::uint64_t seed = defaults.seed;
    std::string data, graph, checkpoint, output_dir = defaults.paths.output_dir;
    int grid_rows = defaults.synth.grid_rows, grid_cols = defaults.synth.grid_cols;
    double beta_neighbor = defaults.synth.beta_neighbor;
    double lambda_min = defaults.graph.lambda_min;
    bool no_repair = false;
    std::string ablation = "full";
    int epochs = defaults.train.max_epochs;
    int batch_size = defaults.train.batch_size;
    int patience = defaults.train.early_stop_patience;
    std::string input, output;
    double assign_radius = defaults.predict.assign_radius_m;
    std::vector<int> sizes = defaults.bench.sizes;
    int repeats = defaults.bench.repeats;
    bool corrupt_grad = false;

    std::map<std::string, CLI::Option*> opts;

    bool given(const std::string& name) const {
        auto it = opts.find(name);
        return it != opts.end() && it->second->count() > 0;
    }
};

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

void ensure_parent(const fs::path& file) {
    if (file.has_parent_path()) ensure_dir(file.parent_path());
}

RunConfig resolve_config(const Overrides& o) {
    RunConfig c = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
    if (o.given("seed")) c.seed = o.seed;
    if (o.given("data")) c.paths.data = o.data;
    if (o.given("graph")) c.paths.graph = o.graph;
    if (o.given("checkpoint")) c.paths.checkpoint = o.checkpoint;
    if (o.given("output-dir")) c.paths.output_dir = o.output_dir;
    if (o.given("rows")) c.synth.grid_rows = o.grid_rows;
    if (o.given("cols")) c.synth.grid_cols = o.grid_cols;
    if (o.given("neighbor-coef")) c.synth.beta_neighbor = o.beta_neighbor;
    if (o.given("lambda-min")) c.graph.lambda_min = o.lambda_min;
    if (o.given("no-repair")) c.graph.repair = false;
    if (o.given("epochs")) c.train.max_epochs = o.epochs;
    if (o.given("batch-size")) c.train.batch_size = o.batch_size;
    if (o.given("patience")) c.train.early_stop_patience = o.patience;
    if (o.given("input")) c.predict.input = o.input;
    if (o.given("output")) c.predict.output = o.output;
    if (o.given("assign-radius")) c.predict.assign_radius_m = o.assign_radius;
    if (o.given("sizes")) c.bench.sizes = o.sizes;
    if (o.given("repeats")) c.bench.repeats = o.repeats;
    c.resolve();
    c.validate();
    return c;
}

std::string class_counts(std::span<const int> labels) {
    std::array<std::size_t, kNumClasses> n{};
    for (int y : labels) ++n[y];
    std::string s;
    for (int c = 0; c < kNumClasses; ++c) s += (c ? " " : "") + std::to_string(n[c]);
    return s;
}

int cmd_synth(const RunConfig& c) {
    const auto res = synth_generate(c.synth, c.seed);
    ensure_parent(c.paths.data);
    write_csv(fs::path(c.paths.data), res.records);
    ensure_dir(c.paths.output_dir);
    write_json(fs::path(c.paths.output_dir) / "synth_truth.json", to_json(res.truth));
    std::vector<int> labels;
    for (const auto& r : res.records) labels.push_back(r.severity);
    std::cout << "records " << res.records.size() << " nodes " << c.synth.grid_rows * c.synth.grid_cols
              << " class counts " << class_counts(labels) << "\nwrote " << c.paths.data << '\n';
    return 0;
}

json connectivity_json(const BuildParams& p, int components, const std::vector<std::string>& warnings) {
    return json{{"lambda2", p.lambda2},
                {"lambda_min", p.config.lambda_min},
                {"components", components},
                {"repair_attempts", p.repair_attempts},
                {"k_max_used", p.k_max_used},
                {"epsilon_m", p.epsilon_m},
                {"min_samples", p.min_samples},
                {"n_local", p.n_local},
                {"noise_count", p.noise_count},
                {"warnings", warnings}};
}

int cmd_build_graph(const RunConfig& c) {
    require_file(c.paths.data, "data");
    const auto records = load_csv(c.paths.data);
    ensure_dir(c.paths.output_dir);
    const fs::path report = fs::path(c.paths.output_dir) / "connectivity.json";
    GraphBuildResult res;
    try {
        res = build_graph(records, c.graph);
    } catch (const ConnectivityError& e) {
        write_json(report, json{{"lambda2", e.lambda2()},
                                {"lambda_min", c.graph.lambda_min},
                                {"components", e.components()},
                                {"error", e.what()}});
        throw;
    }
    const auto& g = res.graph;
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
    ensure_parent(c.paths.graph);
    save_graph(c.paths.graph, g);
    write_json(report, connectivity_json(g.build_params, connected_components(g.adjacency), res.warnings));
    std::printf("nodes %zu edges %zu noise %zu lambda2 %.6f repair_attempts %d\nwrote %s\n", g.num_nodes(),
                g.edges.size(), res.noise_ids.size(), g.build_params.lambda2, g.build_params.repair_attempts,
                c.paths.graph.c_str());
    return 0;
}

PreparedData load_prepared(const RunConfig& c) {
    require_file(c.paths.data, "data");
    require_file(c.paths.graph, "graph");
    return prepare(load_csv(c.paths.data), load_graph(c.paths.graph), c.seed, c.split);
}

fs::path variant_path(const fs::path& base, const std::string& variant, bool multi) {
    if (!multi) return base;
    fs::path p = base;
    p.replace_filename(base.stem().string() + "_" + variant + base.extension().string());
    return p;
}

int cmd_train(const RunConfig& c, const std::string& ablation) {
    std::vector<std::string> variants;
    if (ablation == "all") {
        variants = ablation_names();
    } else {
        ablation_from_name(ablation);
        variants.push_back(ablation);
    }
    const bool multi = variants.size() > 1;
    const auto data = load_prepared(c);
    ensure_dir(c.paths.output_dir);
    const fs::path out(c.paths.output_dir);
    const auto ginput = make_graph_input<float>(data.graph, data.features.node_spatial);
    std::string table = "variant,epochs,best_val_macro_f1,val_weighted_f1,val_balanced_accuracy,val_kappa\n";
    for (const auto& v : variants) {
        const auto run = run_variant(data, v, c.model, c.train, [&](const EpochRecord& e) {
            std::printf("[%s] epoch %3d lr %.3e loss %.5f grad %.4f val_f1 %.4f\n", v.c_str(), e.epoch, e.lr,
                        e.train_loss, e.grad_norm, e.val_macro_f1);
            std::fflush(stdout);
        });
        const auto ckpt = variant_path(c.paths.checkpoint, v, multi);
        ensure_parent(ckpt);
        save_checkpoint(ckpt, run.fit.best);
        write_history_csv(out / variant_path("history.csv", v, multi), run.fit.history);
        const auto val = evaluate_rows(run.fit.best, ginput, data.features, data.val_rows);
        metrics::write_report(out / variant_path("val_metrics.json", v, multi), val);
        char line[256];
        std::snprintf(line, sizeof line, "%s,%d,%.6f,%.6f,%.6f,%.6f\n", v.c_str(), run.fit.epochs_run,
                      run.best_val_macro_f1, val.weighted_f1, val.balanced_accuracy, val.cohens_kappa);
        table += line;
        std::printf("[%s] best val macro F1 %.4f at epoch %d; wrote %s\n", v.c_str(), run.best_val_macro_f1,
                    run.fit.best.epoch, ckpt.c_str());
    }
    if (multi) {
        std::ofstream(out / "ablation.csv", std::ios::binary) << table;
        std::cout << table;
    }
    return 0;
}

int cmd_evaluate(const RunConfig& c) {
    require_file(c.paths.data, "data");
    require_file(c.paths.graph, "graph");
    require_file(c.paths.checkpoint, "checkpoint");
    const auto ckpt = load_checkpoint(c.paths.checkpoint);
    const auto records = load_csv(c.paths.data);
    const auto graph = load_graph(c.paths.graph);
    const auto split = stratified_split(records, c.split, ckpt.train.seed);
    const auto fset = build_features(records, graph, ckpt.stats);
    const auto rows = fset.rows_for(split.test_ids);
    if (rows.empty()) throw DataError("evaluate: the test split has no records on graph nodes");
    const auto ginput = make_graph_input<float>(graph, fset.node_spatial);
    const auto report = evaluate_rows(ckpt, ginput, fset, rows);
    ensure_dir(c.paths.output_dir);
    const fs::path out(c.paths.output_dir);
    metrics::write_report(out / "test_metrics.json", report);
    metrics::write_confusion_csv(out / "confusion.csv", report.confusion);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    std::printf("test samples %zu macro_f1 %.4f weighted_f1 %.4f balanced_acc %.4f kappa %.4f", report.samples,
                report.macro_f1, report.weighted_f1, report.balanced_accuracy, report.cohens_kappa);
    if (report.roc_auc_weighted) std::printf(" roc_auc %.4f", *report.roc_auc_weighted);
    if (report.severe_recall) std::printf(" severe_recall %.4f", *report.severe_recall);
    std::printf("\n");
    return 0;
}

int cmd_predict(const RunConfig& c) {
    if (c.predict.input.empty()) throw ConfigError("config field 'predict.input': required by predict");
    require_file(c.predict.input, "input");
    require_file(c.paths.graph, "graph");
    require_file(c.paths.checkpoint, "checkpoint");
    const auto ckpt = load_checkpoint(c.paths.checkpoint);
    const auto graph = load_graph(c.paths.graph);
    const auto records = load_csv(c.predict.input);
    const double radius =
        c.predict.assign_radius_m > 0 ? c.predict.assign_radius_m : graph.build_params.epsilon_m;
    const auto fset = build_features(records, graph, ckpt.stats, radius);
    for (const auto& id : fset.unassigned_ids) {
        std::cerr << "warning: record '" << id << "' is farther than " << radius << " m from every segment\n";
    }
    std::vector<int> rows(fset.num_records());
    std::iota(rows.begin(), rows.end(), 0);
    const auto ginput = make_graph_input<float>(graph, fset.node_spatial);
    const RowMatrix probs = rows.empty() ? RowMatrix(0, kNumClasses) : predict_rows(ckpt, ginput, fset, rows);
    const auto pred = metrics::argmax_rows(probs);
    ensure_parent(c.predict.output);
    std::ofstream out(c.predict.output, std::ios::binary);
    if (!out) throw DataError("cannot write " + c.predict.output);
    out << "id,node,predicted,p0,p1,p2,p3\n";
    char buf[160];
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::snprintf(buf, sizeof buf, ",%d,%d,%.9g,%.9g,%.9g,%.9g\n", fset.record_node[i], pred[i], probs(i, 0),
                      probs(i, 1), probs(i, 2), probs(i, 3));
        out << fset.record_ids[i] << buf;
    }
    std::printf("scored %zu records (%zu unassigned); wrote %s\n", rows.size(), fset.unassigned_ids.size(),
                c.predict.output.c_str());
    return 0;
}

int cmd_gradcheck(const RunConfig& c, bool corrupt) {
    SuiteOptions so;
    so.seed = c.seed;
    so.h = c.gradcheck.h;
    so.op_threshold = c.gradcheck.op_threshold;
    so.model_threshold = c.gradcheck.model_threshold;
    so.model_coords_per_tensor = c.gradcheck.model_coords_per_tensor;
    so.corrupt_gradient = corrupt;
    const auto entries = run_gradcheck_suite(so);
    json rows = json::array();
    bool ok = true;
    for (const auto& e : entries) {
        ok = ok && e.passed();
        std::printf("%-22s max_rel_err %.3e  threshold %.0e  checked %4zu  excluded %zu  %s\n", e.name.c_str(),
                    e.result.max_rel_error, e.threshold, e.result.checked, e.result.excluded,
                    e.passed() ? "ok" : "FAIL");
        rows.push_back({{"name", e.name},
                        {"max_rel_error", e.result.max_rel_error},
                        {"threshold", e.threshold},
                        {"checked", e.result.checked},
                        {"excluded", e.result.excluded},
                        {"passed", e.passed()}});
    }
    ensure_dir(c.paths.output_dir);
    write_json(fs::path(c.paths.output_dir) / "gradcheck.json", rows);
    if (!ok) throw NumericError("gradcheck: relative error above threshold");
    return 0;
}

int cmd_bench(const RunConfig& c) {
    const auto res = run_bench(c.bench.sizes, c.seed, c.bench.repeats, c.model);
    ensure_dir(c.paths.output_dir);
    const fs::path out(c.paths.output_dir);
    std::ofstream csv(out / "bench.csv", std::ios::binary);
    csv << "nodes,edges,records,millis\n";
    std::printf("%8s %8s %8s %12s\n", "nodes", "edges", "records", "ms");
    for (const auto& r : res.rows) {
        csv << r.nodes << ',' << r.edges << ',' << r.records << ',' << r.millis << '\n';
        std::printf("%8d %8zu %8zu %12.3f\n", r.nodes, r.edges, r.records, r.millis);
    }
    write_json(out / "bench_fit.json",
               json{{"slope_ms_per_node", res.fit.slope}, {"intercept_ms", res.fit.intercept}, {"r2", res.fit.r2}});
    std::printf("T = %.5f N + %.3f  (R^2 = %.4f)\n", res.fit.slope, res.fit.intercept, res.fit.r2);
    return 0;
}

}  // namespace
}  // namespace starn

int main(int argc, char** argv) {
    using namespace starn;
    Overrides o;
    CLI::App app{"Spatio-temporal accident severity prediction with graph attention"};
    app.require_subcommand(0, 1);
    app.fallthrough();
    app.footer(
        "Config file fields not exposed as flags (synth, graph, model, train, split, gradcheck) "
        "default to the values printed by --emit-config. Flags override the config file.");

    auto& opts = o.opts;
    app.add_option("-c,--config", o.config_path, "JSON run config")->check(CLI::ExistingFile);
    app.add_flag("--emit-config", o.emit_config, "Print the fully resolved config and exit");
    opts["seed"] = app.add_option("--seed", o.seed, "Root seed for every random substream")->capture_default_str();
    opts["data"] = app.add_option("--data", o.data, "Accident CSV (default <output-dir>/accidents.csv)");
    opts["graph"] = app.add_option("--graph", o.graph, "Graph JSON (default <output-dir>/graph.json)");
    opts["checkpoint"] =
        app.add_option("--checkpoint", o.checkpoint, "Checkpoint file (default <output-dir>/model.ckpt)");
    opts["output-dir"] =
        app.add_option("-o,--output-dir", o.output_dir, "Directory for all artifacts")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic accident CSV and its ground truth");
    opts["rows"] = synth->add_option("--rows", o.grid_rows, "Road grid rows")->capture_default_str();
    opts["cols"] = synth->add_option("--cols", o.grid_cols, "Road grid columns")->capture_default_str();
    opts["neighbor-coef"] =
        synth->add_option("--neighbor-coef", o.beta_neighbor, "Neighbor-risk coefficient")->capture_default_str();

    auto* build = app.add_subcommand("build-graph", "Cluster records into road segments and build the graph");
    opts["lambda-min"] =
        build->add_option("--lambda-min", o.lambda_min, "Minimum algebraic connectivity")->capture_default_str();
    opts["no-repair"] = build->add_flag("--no-repair", o.no_repair, "Fail instead of densifying a weak graph");

    auto* train = app.add_subcommand("train", "Train a model and write checkpoint, history and validation report");
    train->add_option("--ablation", o.ablation, "Variant: full, no_gat, no_temporal, no_external, concat_fusion, "
                                                "single_head, or all")
        ->capture_default_str();
    opts["epochs"] = train->add_option("--epochs", o.epochs, "Maximum epochs")->capture_default_str();
    opts["batch-size"] = train->add_option("--batch-size", o.batch_size, "Mini-batch size")->capture_default_str();
    opts["patience"] = train->add_option("--patience", o.patience, "Early-stopping patience")->capture_default_str();

    auto* evaluate = app.add_subcommand("evaluate", "Score the checkpoint on the test split");

    auto* predict = app.add_subcommand("predict", "Per-record class and confidence scores for a CSV");
    opts["input"] = predict->add_option("--input", o.input, "Records to score (starn-csv/1)");
    opts["output"] = predict->add_option("--output", o.output, "Predictions CSV (default <output-dir>/predictions.csv)");
    opts["assign-radius"] = predict->add_option("--assign-radius", o.assign_radius,
                                                "Max distance in m to a segment member; 0 uses the graph epsilon")
                                ->capture_default_str();

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of every op and the full model");
    gradcheck->add_flag("--corrupt-grad", o.corrupt_grad)->group("");

    auto* bench = app.add_subcommand("bench", "Time inference over graph sizes and fit a line");
    opts["sizes"] = bench->add_option("--sizes", o.sizes, "Graph sizes in nodes")->capture_default_str();
    opts["repeats"] = bench->add_option("--repeats", o.repeats, "Timed repeats per size")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const RunConfig cfg = resolve_config(o);
        if (o.emit_config) {
            std::cout << nlohmann::json(cfg).dump(2) << '\n';
            return 0;
        }
        if (app.get_subcommands().empty()) {
            std::cerr << "A subcommand is required\nRun with --help for more information.\n";
            return 2;
        }
        if (*synth) return cmd_synth(cfg);
        if (*build) return cmd_build_graph(cfg);
        if (*train) return cmd_train(cfg, o.ablation);
        if (*evaluate) return cmd_evaluate(cfg);
        if (*predict) return cmd_predict(cfg);
        if (*gradcheck) return cmd_gradcheck(cfg, o.corrupt_grad);
        if (*bench) return cmd_bench(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return 1;
}
