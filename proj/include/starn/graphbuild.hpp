#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SparseCore>
#include <nlohmann/json_fwd.hpp>

#include "starn/ingest.hpp"

namespace starn {

// Aggregated spatial attributes of a road segment, in feature order.
// Continuous attributes are member medians, categorical ones member modes.
struct SpatialProfile {
    double elevation = 0.0;
    double slope = 0.0;
    double curvature = 0.0;
    double lanes = 0.0;
    double road_width = 0.0;
    double speed_limit = 0.0;
    int road_type = 0;
    int land_use = 0;
    double flood_risk = 0.0;

    bool operator==(const SpatialProfile&) const = default;
};

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;
    bool operator==(const GeoPoint&) const = default;
};

struct RoadSegmentNode {
    int node_id = 0;
    GeoPoint centroid;
    std::vector<std::string> member_ids;
    std::vector<GeoPoint> member_points;  // parallel to member_ids
    SpatialProfile spatial_profile;

    bool operator==(const RoadSegmentNode&) const = default;
};

enum class ConnType : int { Topological = 0, Spatial = 1, Functional = 2 };

const char* to_string(ConnType t);
ConnType conn_type_from_string(const std::string& s);

inline constexpr int kEdgeFeatureDim = 5;

struct Edge {
    int src = 0;
    int dst = 0;
    double weight = 0.0;
    double distance = 0.0;    // meters between centroids
    double similarity = 0.0;  // segment_similarity of the endpoints
    ConnType conn_type = ConnType::Topological;
    // [normalized distance, similarity, one-hot(topological, spatial, functional)]
    std::array<double, kEdgeFeatureDim> edge_features{};

    bool operator==(const Edge&) const = default;
};

struct SimilarityWeights {
    double road_type = 0.4;
    double speed = 0.3;
    double lanes = 0.3;
};

struct GraphConfig {
    // DBSCAN parameter derivation
    double gps_sigma_m = 5.0;
    double local_radius_m = 50.0;  // neighborhood used to count n_local
    double epsilon_override_m = 0.0;  // > 0 replaces the derived epsilon
    int min_samples_override = 0;     // > 0 replaces the derived min_samples

    SimilarityWeights similarity_weights;
    double alpha = 1.0;              // adaptive-k scale
    double density_radius_m = 500.0; // radius for local node density
    int k_min = 3;
    int k_max = 15;
    double sigma_decay_m = 500.0;
    std::array<double, 3> phi{1.0, 0.8, 0.6};  // topological, spatial, functional
    double topo_factor = 2.0;        // topological distance = topo_factor * epsilon
    double topo_distance_m = 0.0;    // used by build_edges directly; build_graph sets it
    double functional_threshold = 0.9;
    double functional_radius_m = 5000.0;

    double lambda_min = 0.1;
    bool repair = true;
    int max_repair_attempts = 4;
    int repair_k_step = 2;
};

void to_json(nlohmann::json& j, const GraphConfig& c);
void from_json(const nlohmann::json& j, GraphConfig& c);

struct BuildParams {
    double epsilon_m = 0.0;
    int min_samples = 0;
    int n_local = 0;
    double road_width_median = 0.0;
    GraphConfig config;
    int k_max_used = 0;
    int repair_attempts = 0;
    double lambda2 = 0.0;
    std::size_t noise_count = 0;
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct RoadGraph {
    std::vector<RoadSegmentNode> nodes;
    std::vector<Edge> edges;  // sorted by (src, dst)
    SparseMatrix adjacency;
    BuildParams build_params;

    std::size_t num_nodes() const { return nodes.size(); }
};

// ---------------------------------------------------------------------------
// Graph construction steps

struct DbscanParams {
    double epsilon_m;
    int min_samples;
};

DbscanParams dbscan_params(double road_width_median, double gps_sigma, int n_local);

struct Clustering {
    std::vector<RoadSegmentNode> nodes;
    std::vector<std::string> noise_ids;
};

// Cluster labels per point: -1 noise, otherwise the cluster id.
std::vector<int> dbscan_labels(std::span<const GeoPoint> points, double epsilon_m, int min_samples);

Clustering cluster_segments(std::span<const AccidentRecord> records, double epsilon_m, int min_samples);

double segment_similarity(const SpatialProfile& a, const SpatialProfile& b,
                          const SimilarityWeights& w, double max_speed_range, double max_lane_range);

int adaptive_k(double local_density, double alpha, int k_min = 3, int k_max = 15);

// Edge feature 0: 1 - exp(-d / sigma), in [0, 1).
double normalized_distance(double distance_m, double sigma_m);

double edge_weight(double distance_m, double functional_sim, ConnType type, const GraphConfig& config);

struct EdgeBuildResult {
    std::vector<Edge> edges;
    std::vector<std::string> warnings;
};

EdgeBuildResult build_edges(std::span<const RoadSegmentNode> nodes, const GraphConfig& config);

SparseMatrix assemble_adjacency(std::span<const Edge> edges, int n);

double algebraic_connectivity(const SparseMatrix& adjacency);
int connected_components(const SparseMatrix& adjacency);

struct GraphBuildResult {
    RoadGraph graph;
    std::vector<std::string> noise_ids;
    std::vector<std::string> warnings;
};

GraphBuildResult build_graph(std::span<const AccidentRecord> records, const GraphConfig& config);

// ---------------------------------------------------------------------------
// starn-graph/1 JSON container

inline constexpr std::string_view kGraphFormat = "starn-graph/1";

nlohmann::json graph_to_json(const RoadGraph& g);
RoadGraph graph_from_json(const nlohmann::json& j);
void save_graph(const std::filesystem::path& path, const RoadGraph& g);
RoadGraph load_graph(const std::filesystem::path& path);

}  // namespace starn
