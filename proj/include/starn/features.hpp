#pragma once

#include <array>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "starn/graphbuild.hpp"
#include "starn/ingest.hpp"

namespace starn {

inline constexpr int kSpatialDim = 9;
inline constexpr int kTemporalDim = 11;
inline constexpr int kExternalDim = 8;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Definitions of the binary temporal indicators.
struct TemporalConfig {
    std::vector<int> peak_hours{7, 8, 9, 16, 17, 18, 19};
    int night_start = 20;  // night = [night_start, 24) U [0, night_end)
    int night_end = 6;
    std::vector<int> weekend_days{5, 6};

    bool operator==(const TemporalConfig&) const = default;
};

// [sin,cos](hour/24), [sin,cos](day_of_week/7), [sin,cos]((day_of_month-1)/31),
// [sin,cos]((month-1)/12), peak, night, weekend
std::array<double, kTemporalDim> encode_temporal(const AccidentRecord& r, const TemporalConfig& cfg = {});

// elevation, slope, curvature, lanes, road_width, speed_limit, road_type, land_use, flood_risk
std::array<double, kSpatialDim> encode_spatial(const SpatialProfile& p);

// temperature, precipitation, humidity, wind_speed, visibility, weather_condition,
// vehicle_type, traffic_density
std::array<double, kExternalDim> encode_external(const AccidentRecord& r);

struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<bool> normalized;  // false: column passes through unchanged

    bool operator==(const NormStats&) const = default;
};

inline constexpr double kStdFloor = 1e-8;

// Population mean/std over the given rows for the masked columns.
NormStats fit_normalizer(const RowMatrix& train_rows, const std::vector<bool>& mask);
RowMatrix apply_normalizer(const RowMatrix& m, const NormStats& stats);

struct FeatureStats {
    NormStats spatial;
    NormStats external;
    TemporalConfig temporal;

    bool operator==(const FeatureStats&) const = default;
};

nlohmann::json to_json(const FeatureStats& s);
FeatureStats feature_stats_from_json(const nlohmann::json& j);

struct FeatureSet {
    RowMatrix node_spatial;     // n x 9, normalized
    RowMatrix record_temporal;  // m x 11
    RowMatrix record_external;  // m x 8, normalized
    std::vector<std::string> record_ids;
    std::vector<int> record_node;
    std::vector<int> labels;
    std::unordered_map<std::string, int> row_of;  // record id -> row
    std::vector<std::string> unassigned_ids;      // records outside every segment
    FeatureStats stats;

    std::size_t num_records() const { return record_ids.size(); }
    // Rows for the given ids, skipping ids that are not in the feature set.
    std::vector<int> rows_for(std::span<const std::string> ids) const;
};

// Fits normalization on the training ids, then encodes every record that
// belongs to a graph node.
FeatureSet build_features(std::span<const AccidentRecord> records, const RoadGraph& graph,
                          std::span<const std::string> train_ids, const TemporalConfig& temporal = {});

// Encodes with previously fitted statistics (inference). With a positive
// assign_radius_m, records outside every segment join the nearest node.
FeatureSet build_features(std::span<const AccidentRecord> records, const RoadGraph& graph,
                          const FeatureStats& stats, double assign_radius_m = 0.0);

// Node whose nearest member point lies within radius_m of (lat, lon); -1 if none.
int nearest_node(const RoadGraph& graph, double lat, double lon, double radius_m);

}  // namespace starn
