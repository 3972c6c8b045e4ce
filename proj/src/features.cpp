#include "starn/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "starn/error.hpp"
#include "starn/geo.hpp"

namespace starn {

namespace {

std::pair<double, double> cyclic(int n, int period) {
    const int r = ((n % period) + period) % period;
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(period);
    return {std::sin(angle), std::cos(angle)};
}

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

}  // namespace

std::array<double, kTemporalDim> encode_temporal(const AccidentRecord& r, const TemporalConfig& cfg) {
    std::array<double, kTemporalDim> out{};
    const auto h = cyclic(r.hour, 24);
    const auto d = cyclic(r.day_of_week, 7);
    const auto dm = cyclic(r.day_of_month - 1, 31);
    const auto mo = cyclic(r.month - 1, 12);
    out[0] = h.first, out[1] = h.second;
    out[2] = d.first, out[3] = d.second;
    out[4] = dm.first, out[5] = dm.second;
    out[6] = mo.first, out[7] = mo.second;
    const int hour = ((r.hour % 24) + 24) % 24;
    const int dow = ((r.day_of_week % 7) + 7) % 7;
    out[8] = contains(cfg.peak_hours, hour) ? 1.0 : 0.0;
    const bool night = cfg.night_start <= cfg.night_end
                           ? (hour >= cfg.night_start && hour < cfg.night_end)
                           : (hour >= cfg.night_start || hour < cfg.night_end);
    out[9] = night ? 1.0 : 0.0;
    out[10] = contains(cfg.weekend_days, dow) ? 1.0 : 0.0;
    return out;
}

std::array<double, kSpatialDim> encode_spatial(const SpatialProfile& p) {
    if (p.road_type < 0 || p.road_type >= kRoadTypeCodes) {
        throw DataError("encode_spatial: unknown road_type code " + std::to_string(p.road_type));
    }
    if (p.land_use < 0 || p.land_use >= kLandUseCodes) {
        throw DataError("encode_spatial: unknown land_use code " + std::to_string(p.land_use));
    }
    return {p.elevation, p.slope, p.curvature, p.lanes, p.road_width, p.speed_limit,
            static_cast<double>(p.road_type), static_cast<double>(p.land_use), p.flood_risk};
}

std::array<double, kExternalDim> encode_external(const AccidentRecord& r) {
    if (r.weather_condition < 0 || r.weather_condition >= kWeatherCodes) {
        throw DataError("encode_external: unknown weather_condition code " + std::to_string(r.weather_condition));
    }
    if (r.vehicle_type < 0 || r.vehicle_type >= kVehicleCodes) {
        throw DataError("encode_external: unknown vehicle_type code " + std::to_string(r.vehicle_type));
    }
    return {r.temperature, r.precipitation, r.humidity, r.wind_speed, r.visibility,
            static_cast<double>(r.weather_condition), static_cast<double>(r.vehicle_type), r.traffic_density};
}

NormStats fit_normalizer(const RowMatrix& rows, const std::vector<bool>& mask) {
    const auto cols = rows.cols();
    if (static_cast<Eigen::Index>(mask.size()) != cols) throw DimensionError("fit_normalizer: mask size mismatch");
    if (rows.rows() == 0) throw DataError("fit_normalizer: no training rows");
    NormStats s;
    s.mean.assign(cols, 0.0);
    s.std.assign(cols, 1.0);
    s.normalized = mask;
    const double n = static_cast<double>(rows.rows());
    for (Eigen::Index c = 0; c < cols; ++c) {
        if (!mask[c]) continue;
        const double mean = rows.col(c).sum() / n;
        const double var = (rows.col(c).array() - mean).square().sum() / n;
        s.mean[c] = mean;
        s.std[c] = std::max(std::sqrt(var), kStdFloor);
    }
    return s;
}

RowMatrix apply_normalizer(const RowMatrix& m, const NormStats& stats) {
    if (static_cast<Eigen::Index>(stats.mean.size()) != m.cols()) {
        throw DimensionError("apply_normalizer: stats have " + std::to_string(stats.mean.size()) +
                             " columns, matrix has " + std::to_string(m.cols()));
    }
    RowMatrix out = m;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (!stats.normalized[c]) continue;
        if (stats.std[c] <= kStdFloor) {
            out.col(c).setZero();  // constant column
            continue;
        }
        out.col(c) = (m.col(c).array() - stats.mean[c]) / stats.std[c];
    }
    return out;
}

nlohmann::json to_json(const FeatureStats& s) {
    auto norm = [](const NormStats& n) {
        return nlohmann::json{{"mean", n.mean}, {"std", n.std}, {"normalized", n.normalized}};
    };
    return nlohmann::json{{"spatial", norm(s.spatial)},
                          {"external", norm(s.external)},
                          {"temporal",
                           {{"peak_hours", s.temporal.peak_hours},
                            {"night_start", s.temporal.night_start},
                            {"night_end", s.temporal.night_end},
                            {"weekend_days", s.temporal.weekend_days}}}};
}

FeatureStats feature_stats_from_json(const nlohmann::json& j) {
    auto norm = [](const nlohmann::json& n) {
        NormStats s;
        s.mean = n.at("mean").get<std::vector<double>>();
        s.std = n.at("std").get<std::vector<double>>();
        s.normalized = n.at("normalized").get<std::vector<bool>>();
        return s;
    };
    FeatureStats s;
    s.spatial = norm(j.at("spatial"));
    s.external = norm(j.at("external"));
    const auto& t = j.at("temporal");
    s.temporal.peak_hours = t.at("peak_hours").get<std::vector<int>>();
    s.temporal.night_start = t.at("night_start").get<int>();
    s.temporal.night_end = t.at("night_end").get<int>();
    s.temporal.weekend_days = t.at("weekend_days").get<std::vector<int>>();
    return s;
}

std::vector<int> FeatureSet::rows_for(std::span<const std::string> ids) const {
    std::vector<int> rows;
    rows.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = row_of.find(id);
        if (it != row_of.end()) rows.push_back(it->second);
    }
    return rows;
}

int nearest_node(const RoadGraph& graph, double lat, double lon, double radius_m) {
    int best = -1;
    double best_d = radius_m;
    for (const auto& v : graph.nodes) {
        for (const auto& p : v.member_points) {
            const double d = geo::haversine_m(lat, lon, p.lat, p.lon);
            if (d <= best_d) {
                best_d = d;
                best = v.node_id;
            }
        }
    }
    return best;
}

namespace {

// Raw (unnormalized) encodings of every record that belongs to a node.
FeatureSet encode_raw(std::span<const AccidentRecord> records, const RoadGraph& graph,
                      const TemporalConfig& temporal, double assign_radius_m = 0.0) {
    std::unordered_map<std::string, int> node_of;
    for (const auto& v : graph.nodes) {
        for (const auto& id : v.member_ids) node_of.emplace(id, v.node_id);
    }
    FeatureSet fs;
    fs.stats.temporal = temporal;
    const auto n = static_cast<Eigen::Index>(graph.nodes.size());
    fs.node_spatial.resize(n, kSpatialDim);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto x = encode_spatial(graph.nodes[i].spatial_profile);
        for (int c = 0; c < kSpatialDim; ++c) fs.node_spatial(i, c) = x[c];
    }
    std::vector<const AccidentRecord*> kept;
    for (const auto& r : records) {
        auto it = node_of.find(r.id);
        int node = it == node_of.end() ? -1 : it->second;
        if (node < 0 && assign_radius_m > 0.0) node = nearest_node(graph, r.latitude, r.longitude, assign_radius_m);
        if (node < 0) {
            fs.unassigned_ids.push_back(r.id);
            continue;
        }
        kept.push_back(&r);
        fs.record_node.push_back(node);
    }
    const auto m = static_cast<Eigen::Index>(kept.size());
    fs.record_temporal.resize(m, kTemporalDim);
    fs.record_external.resize(m, kExternalDim);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& r = *kept[i];
        const auto t = encode_temporal(r, temporal);
        const auto e = encode_external(r);
        for (int c = 0; c < kTemporalDim; ++c) fs.record_temporal(i, c) = t[c];
        for (int c = 0; c < kExternalDim; ++c) fs.record_external(i, c) = e[c];
        fs.record_ids.push_back(r.id);
        fs.labels.push_back(r.severity);
        fs.row_of.emplace(r.id, static_cast<int>(i));
    }
    return fs;
}

}  // namespace

FeatureSet build_features(std::span<const AccidentRecord> records, const RoadGraph& graph,
                          std::span<const std::string> train_ids, const TemporalConfig& temporal) {
    FeatureSet fs = encode_raw(records, graph, temporal);
    const auto train_rows = fs.rows_for(train_ids);
    if (train_rows.empty()) throw DataError("build_features: no training record belongs to a graph node");

    std::vector<char> node_has_train(graph.nodes.size(), 0);
    for (int r : train_rows) node_has_train[fs.record_node[r]] = 1;
    std::vector<int> train_nodes;
    for (std::size_t v = 0; v < node_has_train.size(); ++v) {
        if (node_has_train[v]) train_nodes.push_back(static_cast<int>(v));
    }
    const RowMatrix spatial_train = fs.node_spatial(train_nodes, Eigen::all);
    const RowMatrix external_train = fs.record_external(train_rows, Eigen::all);
    fs.stats.spatial = fit_normalizer(spatial_train, std::vector<bool>(kSpatialDim, true));
    fs.stats.external = fit_normalizer(external_train, std::vector<bool>(kExternalDim, true));
    fs.node_spatial = apply_normalizer(fs.node_spatial, fs.stats.spatial);
    fs.record_external = apply_normalizer(fs.record_external, fs.stats.external);
    return fs;
}

FeatureSet build_features(std::span<const AccidentRecord> records, const RoadGraph& graph,
                          const FeatureStats& stats, double assign_radius_m) {
    FeatureSet fs = encode_raw(records, graph, stats.temporal, assign_radius_m);
    fs.stats = stats;
    fs.node_spatial = apply_normalizer(fs.node_spatial, stats.spatial);
    fs.record_external = apply_normalizer(fs.record_external, stats.external);
    return fs;
}

}  // namespace starn
