#include "starn/run_config.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "starn/detail/json_util.hpp"
#include "starn/error.hpp"

namespace starn {

namespace fs = std::filesystem;

void RunConfig::resolve() {
    const fs::path out(paths.output_dir);
    if (paths.data.empty()) paths.data = (out / "accidents.csv").string();
    if (paths.graph.empty()) paths.graph = (out / "graph.json").string();
    if (paths.checkpoint.empty()) paths.checkpoint = (out / "model.ckpt").string();
    if (predict.output.empty()) predict.output = (out / "predictions.csv").string();
    train.seed = seed;
}

void RunConfig::validate() const {
    if (paths.output_dir.empty()) throw ConfigError("config field 'paths.output_dir': must not be empty");
    if (split.train < 0 || split.val < 0 || split.test < 0 ||
        std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
        throw ConfigError("config field 'split': ratios must be nonnegative and sum to 1");
    }
    if (synth.grid_rows < 1 || synth.grid_cols < 1) throw ConfigError("config field 'synth.grid_rows': must be >= 1");
    if (synth.spacing_m <= 0) throw ConfigError("config field 'synth.spacing_m': must be positive");
    if (synth.min_records_per_node < 1) throw ConfigError("config field 'synth.min_records_per_node': must be >= 1");
    if (graph.k_min < 1 || graph.k_max < graph.k_min) {
        throw ConfigError("config field 'graph.k_max': need 1 <= k_min <= k_max");
    }
    if (graph.gps_sigma_m < 0) throw ConfigError("config field 'graph.gps_sigma_m': must be nonnegative");
    model.validate();
    train.validate();
    if (bench.sizes.size() < 2) throw ConfigError("config field 'bench.sizes': need at least two sizes");
    for (int n : bench.sizes) {
        if (n < 4) throw ConfigError("config field 'bench.sizes': sizes must be >= 4");
    }
    if (bench.repeats < 1) throw ConfigError("config field 'bench.repeats': must be >= 1");
    if (!(gradcheck.h > 0)) throw ConfigError("config field 'gradcheck.h': must be positive");
    if (!(gradcheck.op_threshold > 0) || !(gradcheck.model_threshold > 0)) {
        throw ConfigError("config field 'gradcheck': thresholds must be positive");
    }
    if (predict.assign_radius_m < 0) throw ConfigError("config field 'predict.assign_radius_m': must be >= 0");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{
        {"seed", c.seed},
        {"paths",
         {{"data", c.paths.data},
          {"graph", c.paths.graph},
          {"checkpoint", c.paths.checkpoint},
          {"output_dir", c.paths.output_dir}}},
        {"synth", c.synth},
        {"graph", c.graph},
        {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
        {"model", c.model},
        {"train", c.train},
        {"bench", {{"sizes", c.bench.sizes}, {"repeats", c.bench.repeats}}},
        {"gradcheck",
         {{"h", c.gradcheck.h},
          {"op_threshold", c.gradcheck.op_threshold},
          {"model_threshold", c.gradcheck.model_threshold},
          {"model_coords_per_tensor", c.gradcheck.model_coords_per_tensor}}},
        {"predict",
         {{"input", c.predict.input},
          {"output", c.predict.output},
          {"assign_radius_m", c.predict.assign_radius_m}}},
    };
}

void merge_json(const nlohmann::json& j, RunConfig& c) {
    detail::JsonFields f(j, "");
    f.get("seed", c.seed);
    if (const auto* p = f.sub("paths")) {
        detail::JsonFields fp(*p, "paths");
        fp.get("data", c.paths.data);
        fp.get("graph", c.paths.graph);
        fp.get("checkpoint", c.paths.checkpoint);
        fp.get("output_dir", c.paths.output_dir);
        fp.finish();
    }
    if (const auto* p = f.sub("synth")) from_json(*p, c.synth);
    if (const auto* p = f.sub("graph")) from_json(*p, c.graph);
    if (const auto* p = f.sub("split")) {
        detail::JsonFields fs(*p, "split");
        fs.get("train", c.split.train);
        fs.get("val", c.split.val);
        fs.get("test", c.split.test);
        fs.finish();
    }
    if (const auto* p = f.sub("model")) from_json(*p, c.model);
    if (const auto* p = f.sub("train")) from_json(*p, c.train);
    if (const auto* p = f.sub("bench")) {
        detail::JsonFields fb(*p, "bench");
        fb.get("sizes", c.bench.sizes);
        fb.get("repeats", c.bench.repeats);
        fb.finish();
    }
    if (const auto* p = f.sub("gradcheck")) {
        detail::JsonFields fg(*p, "gradcheck");
        fg.get("h", c.gradcheck.h);
        fg.get("op_threshold", c.gradcheck.op_threshold);
        fg.get("model_threshold", c.gradcheck.model_threshold);
        fg.get("model_coords_per_tensor", c.gradcheck.model_coords_per_tensor);
        fg.finish();
    }
    if (const auto* p = f.sub("predict")) {
        detail::JsonFields fr(*p, "predict");
        fr.get("input", c.predict.input);
        fr.get("output", c.predict.output);
        fr.get("assign_radius_m", c.predict.assign_radius_m);
        fr.finish();
    }
    f.finish();
}

RunConfig load_run_config(const fs::path& path) {
    require_file(path, "config");
    std::ifstream in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    RunConfig c;
    merge_json(j, c);
    return c;
}

void require_file(const fs::path& path, const std::string& what) {
    if (!fs::is_regular_file(path)) throw DataError(what + " file not found: " + path.string());
}

}  // namespace starn
