#include <gtest/gtest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "starn/error.hpp"
#include "starn/run_config.hpp"

using namespace starn;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
    RunConfig c;
    try {
        merge_json(j, c);
        c.validate();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(RunConfig, DefaultsValidate) {
    RunConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.train.eta_max, 3e-4);
    EXPECT_EQ(c.train.eta_min, 1e-6);
    EXPECT_EQ(c.bench.sizes, (std::vector<int>{100, 200, 400, 800}));
}

TEST(RunConfig, ResolveFillsPathsAndSeed) {
    RunConfig c;
    c.seed = 9;
    c.paths.output_dir = "out";
    c.paths.graph = "custom.json";
    c.resolve();
    EXPECT_EQ(c.paths.data, "out/accidents.csv");
    EXPECT_EQ(c.paths.graph, "custom.json");
    EXPECT_EQ(c.paths.checkpoint, "out/model.ckpt");
    EXPECT_EQ(c.predict.output, "out/predictions.csv");
    EXPECT_EQ(c.train.seed, 9u);
}

TEST(RunConfig, MergeOverlaysOnlyPresentFields) {
    RunConfig c;
    const auto before = c.model.hidden;
    merge_json(json{{"seed", 7}, {"train", {{"gamma", 1.5}}}, {"model", {{"ablation", {{"no_gat", true}}}}}}, c);
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.train.gamma, 1.5);
    EXPECT_EQ(c.train.eta_max, 3e-4);
    EXPECT_TRUE(c.model.ablation.no_gat);
    EXPECT_EQ(c.model.hidden, before);
}

TEST(RunConfig, JsonRoundTrip) {
    RunConfig c;
    c.seed = 3;
    c.train.gamma = 0.5;
    c.model.ablation.single_head = true;
    c.bench.sizes = {10, 20, 40};
    c.split = {0.6, 0.2, 0.2};
    json j;
    to_json(j, c);
    RunConfig d;
    merge_json(j, d);
    json k;
    to_json(k, d);
    EXPECT_EQ(j, k);
}

TEST(RunConfig, UnknownFieldsNamed) {
    EXPECT_NE(config_error(json{{"sed", 1}}).find("'sed'"), std::string::npos);
    EXPECT_NE(config_error(json{{"train", {{"gama", 1.0}}}}).find("'train.gama'"), std::string::npos);
    EXPECT_NE(config_error(json{{"model", {{"ablation", {{"no_fusion", true}}}}}}).find("'model.ablation.no_fusion'"),
              std::string::npos);
    EXPECT_NE(config_error(json{{"paths", {{"out", "x"}}}}).find("'paths.out'"), std::string::npos);
}

TEST(RunConfig, TypeErrorsNamed) {
    EXPECT_NE(config_error(json{{"train", {{"batch_size", "big"}}}}).find("'train.batch_size'"), std::string::npos);
    EXPECT_NE(config_error(json{{"graph", 3}}).find("'graph'"), std::string::npos);
}

TEST(RunConfig, InvalidValuesRejected) {
    EXPECT_NE(config_error(json{{"split", {{"train", 0.9}}}}).find("'split'"), std::string::npos);
    EXPECT_NE(config_error(json{{"bench", {{"sizes", {100}}}}}).find("'bench.sizes'"), std::string::npos);
    EXPECT_NE(config_error(json{{"gradcheck", {{"h", 0.0}}}}).find("'gradcheck.h'"), std::string::npos);
    EXPECT_NE(config_error(json{{"paths", {{"output_dir", ""}}}}).find("'paths.output_dir'"), std::string::npos);
    EXPECT_FALSE(config_error(json{{"train", {{"gamma", -1.0}}}}).empty());
    EXPECT_FALSE(config_error(json{{"model", {{"heads", 0}}}}).empty());
}

TEST(RunConfig, LoadFromFile) {
    fixtures::TempDir dir("config");
    {
        std::ofstream(dir / "ok.json") << R"({"seed": 11, "train": {"max_epochs": 5}})";
        std::ofstream(dir / "bad.json") << "{ not json";
    }
    const auto c = load_run_config(dir / "ok.json");
    EXPECT_EQ(c.seed, 11u);
    EXPECT_EQ(c.train.max_epochs, 5);
    EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
    EXPECT_THROW(load_run_config(dir / "missing.json"), DataError);
}
