#include <fstream>

#include <nlohmann/json.hpp>

#include "starn/error.hpp"
#include "starn/graphbuild.hpp"

namespace starn {

using nlohmann::json;

namespace {

json profile_to_json(const SpatialProfile& p) {
    return json{{"elevation", p.elevation},   {"slope", p.slope},
                {"curvature", p.curvature},   {"lanes", p.lanes},
                {"road_width", p.road_width}, {"speed_limit", p.speed_limit},
                {"road_type", p.road_type},   {"land_use", p.land_use},
                {"flood_risk", p.flood_risk}};
}

SpatialProfile profile_from_json(const json& j) {
    SpatialProfile p;
    p.elevation = j.at("elevation").get<double>();
    p.slope = j.at("slope").get<double>();
    p.curvature = j.at("curvature").get<double>();
    p.lanes = j.at("lanes").get<double>();
    p.road_width = j.at("road_width").get<double>();
    p.speed_limit = j.at("speed_limit").get<double>();
    p.road_type = j.at("road_type").get<int>();
    p.land_use = j.at("land_use").get<int>();
    p.flood_risk = j.at("flood_risk").get<double>();
    return p;
}

}  // namespace

json graph_to_json(const RoadGraph& g) {
    json nodes = json::array();
    for (const auto& v : g.nodes) {
        json pts = json::array();
        for (const auto& p : v.member_points) pts.push_back({p.lat, p.lon});
        nodes.push_back({{"id", v.node_id},
                         {"centroid", {v.centroid.lat, v.centroid.lon}},
                         {"member_ids", v.member_ids},
                         {"member_points", pts},
                         {"spatial_profile", profile_to_json(v.spatial_profile)}});
    }
    json edges = json::array();
    for (const auto& e : g.edges) {
        edges.push_back({{"src", e.src},
                         {"dst", e.dst},
                         {"weight", e.weight},
                         {"distance", e.distance},
                         {"similarity", e.similarity},
                         {"conn_type", to_string(e.conn_type)},
                         {"edge_features", e.edge_features}});
    }
    const auto& bp = g.build_params;
    json params{{"epsilon_m", bp.epsilon_m},
                {"min_samples", bp.min_samples},
                {"n_local", bp.n_local},
                {"road_width_median", bp.road_width_median},
                {"config", bp.config},
                {"k_max_used", bp.k_max_used},
                {"repair_attempts", bp.repair_attempts},
                {"lambda2", bp.lambda2},
                {"noise_count", bp.noise_count}};
    return json{{"format", kGraphFormat}, {"nodes", nodes}, {"edges", edges}, {"build_params", params}};
}

RoadGraph graph_from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != kGraphFormat) {
            throw DataError("unsupported graph format '" + j.at("format").get<std::string>() + "'");
        }
        RoadGraph g;
        for (const auto& jn : j.at("nodes")) {
            RoadSegmentNode v;
            v.node_id = jn.at("id").get<int>();
            const auto c = jn.at("centroid").get<std::array<double, 2>>();
            v.centroid = {c[0], c[1]};
            v.member_ids = jn.at("member_ids").get<std::vector<std::string>>();
            for (const auto& p : jn.at("member_points")) {
                const auto a = p.get<std::array<double, 2>>();
                v.member_points.push_back({a[0], a[1]});
            }
            v.spatial_profile = profile_from_json(jn.at("spatial_profile"));
            if (v.node_id != static_cast<int>(g.nodes.size())) throw DataError("graph node ids must be 0..n-1 in order");
            g.nodes.push_back(std::move(v));
        }
        for (const auto& je : j.at("edges")) {
            Edge e;
            e.src = je.at("src").get<int>();
            e.dst = je.at("dst").get<int>();
            e.weight = je.at("weight").get<double>();
            e.distance = je.at("distance").get<double>();
            e.similarity = je.at("similarity").get<double>();
            e.conn_type = conn_type_from_string(je.at("conn_type").get<std::string>());
            e.edge_features = je.at("edge_features").get<std::array<double, kEdgeFeatureDim>>();
            g.edges.push_back(e);
        }
        const auto& jp = j.at("build_params");
        auto& bp = g.build_params;
        bp.epsilon_m = jp.at("epsilon_m").get<double>();
        bp.min_samples = jp.at("min_samples").get<int>();
        bp.n_local = jp.at("n_local").get<int>();
        bp.road_width_median = jp.at("road_width_median").get<double>();
        bp.config = jp.at("config").get<GraphConfig>();
        bp.k_max_used = jp.at("k_max_used").get<int>();
        bp.repair_attempts = jp.at("repair_attempts").get<int>();
        bp.lambda2 = jp.at("lambda2").get<double>();
        bp.noise_count = jp.at("noise_count").get<std::size_t>();
        g.adjacency = assemble_adjacency(g.edges, static_cast<int>(g.nodes.size()));
        return g;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed graph JSON: ") + e.what());
    }
}

void save_graph(const std::filesystem::path& path, const RoadGraph& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << graph_to_json(g).dump() << '\n';
}

RoadGraph load_graph(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("cannot parse " + path.string() + ": " + e.what());
    }
    return graph_from_json(j);
}

}  // namespace starn
