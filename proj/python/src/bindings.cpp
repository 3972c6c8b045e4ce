#include <numeric>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

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

namespace py = pybind11;
using nlohmann::json;
using namespace starn;

namespace {

RunConfig config_from(const std::string& text) {
    RunConfig c;
    if (!text.empty()) {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        merge_json(j, c);
    }
    c.resolve();
    c.validate();
    return c;
}

std::string synth(const std::string& data_path, const std::string& config) {
    const auto c = config_from(config);
    const auto res = synth_generate(c.synth, c.seed);
    write_csv(std::filesystem::path(data_path), res.records);
    return to_json(res.truth).dump();
}

std::string build_graph_file(const std::string& data_path, const std::string& graph_path, const std::string& config) {
    const auto c = config_from(config);
    require_file(data_path, "data");
    const auto res = build_graph(load_csv(data_path), c.graph);
    save_graph(graph_path, res.graph);
    const auto& p = res.graph.build_params;
    return json{{"nodes", res.graph.num_nodes()},
                {"edges", res.graph.edges.size()},
                {"noise_count", res.noise_ids.size()},
                {"lambda2", p.lambda2},
                {"repair_attempts", p.repair_attempts},
                {"epsilon_m", p.epsilon_m},
                {"min_samples", p.min_samples},
                {"warnings", res.warnings}}
        .dump();
}

std::string train(const std::string& data_path, const std::string& graph_path, const std::string& checkpoint_path,
                  const std::string& variant, const std::string& config) {
    const auto c = config_from(config);
    require_file(data_path, "data");
    require_file(graph_path, "graph");
    const auto data = prepare(load_csv(data_path), load_graph(graph_path), c.seed, c.split);
    RunResult run;
    {
        py::gil_scoped_release release;
        run = run_variant(data, variant, c.model, c.train);
    }
    save_checkpoint(checkpoint_path, run.fit.best);
    return json{{"variant", variant},
                {"best_val_macro_f1", run.best_val_macro_f1},
                {"best_epoch", run.fit.best.epoch},
                {"epochs_run", run.fit.epochs_run},
                {"class_weights", run.fit.class_weights},
                {"history_csv", history_csv(run.fit.history)},
                {"test", metrics::to_json(run.test)}}
        .dump();
}

std::string evaluate(const std::string& data_path, const std::string& graph_path, const std::string& checkpoint_path,
                     const std::string& config) {
    const auto c = config_from(config);
    require_file(data_path, "data");
    require_file(graph_path, "graph");
    require_file(checkpoint_path, "checkpoint");
    const auto ckpt = load_checkpoint(checkpoint_path);
    const auto records = load_csv(data_path);
    const auto graph = load_graph(graph_path);
    const auto split = stratified_split(records, c.split, ckpt.train.seed);
    const auto fset = build_features(records, graph, ckpt.stats);
    const auto rows = fset.rows_for(split.test_ids);
    if (rows.empty()) throw DataError("evaluate: the test split has no records on graph nodes");
    const auto ginput = make_graph_input<float>(graph, fset.node_spatial);
    return metrics::to_json(evaluate_rows(ckpt, ginput, fset, rows)).dump();
}

py::tuple predict(const std::string& input_path, const std::string& graph_path, const std::string& checkpoint_path,
                  double assign_radius_m) {
    require_file(input_path, "input");
    require_file(graph_path, "graph");
    require_file(checkpoint_path, "checkpoint");
    const auto ckpt = load_checkpoint(checkpoint_path);
    const auto graph = load_graph(graph_path);
    const double radius = assign_radius_m > 0 ? assign_radius_m : graph.build_params.epsilon_m;
    const auto fset = build_features(load_csv(input_path), graph, ckpt.stats, radius);
    std::vector<int> rows(fset.num_records());
    std::iota(rows.begin(), rows.end(), 0);
    const auto ginput = make_graph_input<float>(graph, fset.node_spatial);
    RowMatrix probs = rows.empty() ? RowMatrix(0, kNumClasses) : predict_rows(ckpt, ginput, fset, rows);
    return py::make_tuple(fset.record_ids, fset.record_node, probs, fset.unassigned_ids);
}

std::string evaluate_probs(const std::vector<int>& y, const RowMatrix& probs) {
    return metrics::to_json(metrics::evaluate(y, probs)).dump();
}

std::vector<int> dbscan(const std::vector<double>& lat, const std::vector<double>& lon, double eps, int min_samples) {
    if (lat.size() != lon.size()) throw DimensionError("dbscan: lat and lon differ in length");
    std::vector<GeoPoint> pts(lat.size());
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i].lat = lat[i], pts[i].lon = lon[i];
    return dbscan_labels(pts, eps, min_samples);
}

double connectivity(const Eigen::MatrixXd& adjacency) {
    if (adjacency.rows() != adjacency.cols()) throw DimensionError("algebraic_connectivity: matrix is not square");
    return algebraic_connectivity(SparseMatrix(adjacency.sparseView()));
}

double focal(const RowMatrix& probs, const std::vector<int>& labels, const std::vector<double>& alpha, double gamma) {
    ad::Tape<double> tape;
    const auto loss = ad::focal_loss(tape.constant(ad::Tensor<double>::from_matrix(probs)),
                                     std::span<const int>(labels), std::span<const double>(alpha), gamma);
    return loss.value()[0];
}

std::vector<py::dict> gradcheck(bool corrupt_gradient) {
    SuiteOptions o;
    o.corrupt_gradient = corrupt_gradient;
    std::vector<SuiteEntry> entries;
    {
        py::gil_scoped_release release;
        entries = run_gradcheck_suite(o);
    }
    std::vector<py::dict> out;
    for (const auto& e : entries) {
        py::dict d;
        d["name"] = e.name;
        d["max_rel_error"] = e.result.max_rel_error;
        d["threshold"] = e.threshold;
        d["checked"] = e.result.checked;
        d["excluded"] = e.result.excluded;
        d["passed"] = e.passed();
        out.push_back(d);
    }
    return out;
}

std::string bench(const std::vector<int>& sizes, std::uint64_t seed, int repeats) {
    BenchResult res;
    {
        py::gil_scoped_release release;
        res = run_bench(sizes, seed, repeats);
    }
    json rows = json::array();
    for (const auto& r : res.rows) {
        rows.push_back({{"nodes", r.nodes}, {"edges", r.edges}, {"records", r.records}, {"millis", r.millis}});
    }
    return json{{"rows", rows}, {"slope", res.fit.slope}, {"intercept", res.fit.intercept}, {"r2", res.fit.r2}}.dump();
}

std::string default_config() {
    RunConfig c;
    return json(c).dump();
}

}  // namespace

PYBIND11_MODULE(_starn, m) {
    m.doc() = "Native core of the starn accident severity model";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    m.def("default_config", &default_config);
    m.def("synth", &synth, py::arg("data_path"), py::arg("config") = "");
    m.def("build_graph", &build_graph_file, py::arg("data_path"), py::arg("graph_path"), py::arg("config") = "");
    m.def("train", &train, py::arg("data_path"), py::arg("graph_path"), py::arg("checkpoint_path"),
          py::arg("variant") = "full", py::arg("config") = "");
    m.def("evaluate", &evaluate, py::arg("data_path"), py::arg("graph_path"), py::arg("checkpoint_path"),
          py::arg("config") = "");
    m.def("predict", &predict, py::arg("input_path"), py::arg("graph_path"), py::arg("checkpoint_path"),
          py::arg("assign_radius_m") = 0.0);
    m.def("evaluate_probs", &evaluate_probs, py::arg("y_true"), py::arg("probs"));
    m.def("dbscan", &dbscan, py::arg("lat"), py::arg("lon"), py::arg("eps_m"), py::arg("min_samples"));
    m.def("algebraic_connectivity", &connectivity, py::arg("adjacency"));
    m.def("cosine_lr", &cosine_lr, py::arg("t_cur"), py::arg("t_max"), py::arg("eta_min"), py::arg("eta_max"));
    m.def("focal_loss", &focal, py::arg("probs"), py::arg("labels"), py::arg("alpha"), py::arg("gamma"));
    m.def("gradcheck", &gradcheck, py::arg("corrupt_gradient") = false);
    m.def("bench", &bench, py::arg("sizes"), py::arg("seed") = 42, py::arg("repeats") = 5);
    m.def("ablation_names", &ablation_names);
}
