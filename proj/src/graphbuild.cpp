#include "starn/graphbuild.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <unordered_map>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "starn/detail/json_util.hpp"
#include "starn/error.hpp"
#include "starn/geo.hpp"

namespace starn {

const char* to_string(ConnType t) {
    switch (t) {
        case ConnType::Topological: return "topological";
        case ConnType::Spatial: return "spatial";
        case ConnType::Functional: return "functional";
    }
    return "?";
}

ConnType conn_type_from_string(const std::string& s) {
    if (s == "topological") return ConnType::Topological;
    if (s == "spatial") return ConnType::Spatial;
    if (s == "functional") return ConnType::Functional;
    throw DataError("unknown connectivity type '" + s + "'");
}

void to_json(nlohmann::json& j, const GraphConfig& c) {
    j = nlohmann::json{
        {"gps_sigma_m", c.gps_sigma_m},
        {"local_radius_m", c.local_radius_m},
        {"epsilon_override_m", c.epsilon_override_m},
        {"min_samples_override", c.min_samples_override},
        {"similarity_weights",
         {c.similarity_weights.road_type, c.similarity_weights.speed, c.similarity_weights.lanes}},
        {"alpha", c.alpha},
        {"density_radius_m", c.density_radius_m},
        {"k_min", c.k_min},
        {"k_max", c.k_max},
        {"sigma_decay_m", c.sigma_decay_m},
        {"phi", c.phi},
        {"topo_factor", c.topo_factor},
        {"topo_distance_m", c.topo_distance_m},
        {"functional_threshold", c.functional_threshold},
        {"functional_radius_m", c.functional_radius_m},
        {"lambda_min", c.lambda_min},
        {"repair", c.repair},
        {"max_repair_attempts", c.max_repair_attempts},
        {"repair_k_step", c.repair_k_step},
    };
}

void from_json(const nlohmann::json& j, GraphConfig& c) {
    detail::JsonFields f(j, "graph");
    f.get("gps_sigma_m", c.gps_sigma_m);
    f.get("local_radius_m", c.local_radius_m);
    f.get("epsilon_override_m", c.epsilon_override_m);
    f.get("min_samples_override", c.min_samples_override);
    std::array<double, 3> w{c.similarity_weights.road_type, c.similarity_weights.speed,
                            c.similarity_weights.lanes};
    f.get("similarity_weights", w);
    c.similarity_weights = {w[0], w[1], w[2]};
    f.get("alpha", c.alpha);
    f.get("density_radius_m", c.density_radius_m);
    f.get("k_min", c.k_min);
    f.get("k_max", c.k_max);
    f.get("sigma_decay_m", c.sigma_decay_m);
    f.get("phi", c.phi);
    f.get("topo_factor", c.topo_factor);
    f.get("topo_distance_m", c.topo_distance_m);
    f.get("functional_threshold", c.functional_threshold);
    f.get("functional_radius_m", c.functional_radius_m);
    f.get("lambda_min", c.lambda_min);
    f.get("repair", c.repair);
    f.get("max_repair_attempts", c.max_repair_attempts);
    f.get("repair_k_step", c.repair_k_step);
    f.finish();
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Bucket grid over lat/lon whose cells are at least `radius` wide, so every
// pair within `radius` (haversine) lies in the same or an adjacent cell.
class RadiusIndex {
public:
    RadiusIndex(std::span<const GeoPoint> points, double radius_m) : points_(points), radius_(radius_m) {
        double max_abs_lat = 0.0;
        for (const auto& p : points) max_abs_lat = std::max(max_abs_lat, std::abs(p.lat));
        const double ang = radius_m / geo::kEarthRadiusM;
        const double cos_max = std::cos(std::min(90.0, max_abs_lat + ang / kDeg) * kDeg);
        const double s = std::sin(0.5 * ang) / std::max(cos_max, 1e-300);
        brute_ = points.size() < 64 || cos_max < 1e-3 || s >= 1.0 || ang > 0.1;
        if (brute_) return;
        lat_cell_ = ang / kDeg * 1.000001;
        lon_cell_ = 2.0 * std::asin(s) / kDeg * 1.000001;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (std::abs(points[i].lon) + lon_cell_ > 180.0) {
                brute_ = true;  // antimeridian wrap
                cells_.clear();
                return;
            }
            cells_[key(cell_y(points[i].lat), cell_x(points[i].lon))].push_back(static_cast<int>(i));
        }
    }

    // Indices within radius of point i (inclusive of i), ascending.
    std::vector<int> query(std::size_t i) const {
        std::vector<int> out;
        const auto& p = points_[i];
        auto consider = [&](int j) {
            const auto& q = points_[j];
            if (geo::haversine_m(p.lat, p.lon, q.lat, q.lon) <= radius_) out.push_back(j);
        };
        if (brute_) {
            for (std::size_t j = 0; j < points_.size(); ++j) consider(static_cast<int>(j));
            return out;
        }
        const auto cy = cell_y(p.lat), cx = cell_x(p.lon);
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                auto it = cells_.find(key(cy + dy, cx + dx));
                if (it == cells_.end()) continue;
                for (int j : it->second) consider(j);
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    std::int64_t cell_y(double lat) const { return static_cast<std::int64_t>(std::floor(lat / lat_cell_)); }
    std::int64_t cell_x(double lon) const { return static_cast<std::int64_t>(std::floor(lon / lon_cell_)); }
    static std::int64_t key(std::int64_t y, std::int64_t x) { return y * 4000003 + x; }

    std::span<const GeoPoint> points_;
    double radius_;
    bool brute_ = true;
    double lat_cell_ = 1.0, lon_cell_ = 1.0;
    std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int mode(const std::vector<int>& v) {
    std::map<int, int> counts;
    for (int x : v) ++counts[x];
    int best = 0, best_count = -1;
    for (auto [x, c] : counts) {
        if (c > best_count) best = x, best_count = c;  // ties keep the smallest code
    }
    return best;
}

SpatialProfile aggregate_profile(std::span<const AccidentRecord> records, const std::vector<int>& members) {
    auto collect = [&](auto getter) {
        std::vector<double> v;
        v.reserve(members.size());
        for (int i : members) v.push_back(getter(records[i]));
        return median(std::move(v));
    };
    auto collect_codes = [&](auto getter) {
        std::vector<int> v;
        v.reserve(members.size());
        for (int i : members) v.push_back(getter(records[i]));
        return mode(v);
    };
    SpatialProfile p;
    p.elevation = collect([](const auto& r) { return r.elevation; });
    p.slope = collect([](const auto& r) { return r.slope; });
    p.curvature = collect([](const auto& r) { return r.curvature; });
    p.lanes = collect([](const auto& r) { return static_cast<double>(r.lanes); });
    p.road_width = collect([](const auto& r) { return r.road_width; });
    p.speed_limit = collect([](const auto& r) { return r.speed_limit; });
    p.road_type = collect_codes([](const auto& r) { return r.road_type; });
    p.land_use = collect_codes([](const auto& r) { return r.land_use; });
    p.flood_risk = collect([](const auto& r) { return r.flood_risk; });
    return p;
}

}  // namespace

DbscanParams dbscan_params(double road_width_median, double gps_sigma, int n_local) {
    if (!(road_width_median > 0)) throw ConfigError("dbscan_params: median road width must be > 0");
    if (!(gps_sigma >= 0)) throw ConfigError("dbscan_params: positioning sigma must be >= 0");
    if (n_local < 1) throw ConfigError("dbscan_params: n_local must be >= 1 (log2 undefined)");
    const double eps = road_width_median * 2.0 + gps_sigma;
    const int min_samples = static_cast<int>(std::ceil(std::log2(static_cast<double>(n_local)))) + 2;
    return {eps, min_samples};
}

std::vector<int> dbscan_labels(std::span<const GeoPoint> points, double epsilon_m, int min_samples) {
    if (!(epsilon_m > 0)) throw ConfigError("DBSCAN epsilon must be > 0");
    const std::size_t n = points.size();
    RadiusIndex index(points, epsilon_m);
    std::vector<std::vector<int>> nbrs(n);
    std::vector<char> core(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        nbrs[i] = index.query(i);
        core[i] = static_cast<int>(nbrs[i].size()) >= min_samples;
    }
    std::vector<int> label(n, -1);
    int next_cluster = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || label[i] >= 0) continue;
        const int c = next_cluster++;
        std::deque<int> frontier{static_cast<int>(i)};
        label[i] = c;
        while (!frontier.empty()) {
            const int p = frontier.front();
            frontier.pop_front();
            for (int q : nbrs[p]) {
                if (core[q] && label[q] < 0) {
                    label[q] = c;
                    frontier.push_back(q);
                }
            }
        }
    }
    // Border points join the lowest-id cluster that reaches them.
    std::vector<int> result = label;
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        int best = -1;
        for (int q : nbrs[i]) {
            if (core[q] && (best < 0 || label[q] < best)) best = label[q];
        }
        result[i] = best;
    }
    return result;
}

Clustering cluster_segments(std::span<const AccidentRecord> records, double epsilon_m, int min_samples) {
    if (records.empty()) throw DataError("cluster_segments: no records");
    std::vector<GeoPoint> pts;
    pts.reserve(records.size());
    for (const auto& r : records) pts.push_back({r.latitude, r.longitude});
    const auto labels = dbscan_labels(pts, epsilon_m, min_samples);

    int n_clusters = 0;
    for (int l : labels) n_clusters = std::max(n_clusters, l + 1);
    if (n_clusters == 0) throw DataError("no segments found: every record is DBSCAN noise");

    std::vector<std::vector<int>> members(n_clusters);
    Clustering out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) out.noise_ids.push_back(records[i].id);
        else members[labels[i]].push_back(static_cast<int>(i));
    }
    out.nodes.resize(n_clusters);
    for (int c = 0; c < n_clusters; ++c) {
        auto& node = out.nodes[c];
        node.node_id = c;
        double lat = 0, lon = 0;
        for (int i : members[c]) {
            node.member_ids.push_back(records[i].id);
            node.member_points.push_back(pts[i]);
            lat += pts[i].lat;
            lon += pts[i].lon;
        }
        node.centroid = {lat / members[c].size(), lon / members[c].size()};
        node.spatial_profile = aggregate_profile(records, members[c]);
    }
    return out;
}

double segment_similarity(const SpatialProfile& a, const SpatialProfile& b, const SimilarityWeights& w,
                          double max_speed_range, double max_lane_range) {
    if (w.road_type < 0 || w.speed < 0 || w.lanes < 0 ||
        std::abs(w.road_type + w.speed + w.lanes - 1.0) > 1e-9) {
        throw ConfigError("similarity weights must be nonnegative and sum to 1");
    }
    auto ratio_sim = [](double delta, double range) {
        if (!(range > 0)) return delta == 0.0 ? 1.0 : 0.0;
        return std::clamp(1.0 - std::abs(delta) / range, 0.0, 1.0);
    };
    const double sim1 = a.road_type == b.road_type ? 1.0 : 0.0;
    const double sim2 = ratio_sim(a.speed_limit - b.speed_limit, max_speed_range);
    const double sim3 = ratio_sim(a.lanes - b.lanes, max_lane_range);
    return w.road_type * sim1 + w.speed * sim2 + w.lanes * sim3;
}

int adaptive_k(double local_density, double alpha, int k_min, int k_max) {
    if (local_density < 0) throw ConfigError("adaptive_k: density must be >= 0");
    if (!(alpha > 0)) throw ConfigError("adaptive_k: alpha must be > 0");
    const double raw = std::floor(local_density * alpha);
    const double clamped = std::max<double>(k_min, std::min<double>(k_max, raw));
    return static_cast<int>(clamped);
}

double normalized_distance(double distance_m, double sigma_m) { return 1.0 - std::exp(-distance_m / sigma_m); }

double edge_weight(double distance_m, double functional_sim, ConnType type, const GraphConfig& config) {
    if (!(distance_m >= 0)) throw ConfigError("edge_weight: distance must be >= 0");
    if (!(functional_sim >= 0 && functional_sim <= 1)) throw ConfigError("edge_weight: similarity outside [0,1]");
    if (!(config.sigma_decay_m > 0)) throw ConfigError("edge_weight: sigma_decay must be > 0");
    return std::exp(-distance_m / config.sigma_decay_m) * functional_sim *
           config.phi[static_cast<int>(type)];
}

EdgeBuildResult build_edges(std::span<const RoadSegmentNode> nodes, const GraphConfig& config) {
    EdgeBuildResult result;
    const int n = static_cast<int>(nodes.size());
    if (n == 0) return result;

    double speed_lo = nodes[0].spatial_profile.speed_limit, speed_hi = speed_lo;
    double lanes_lo = nodes[0].spatial_profile.lanes, lanes_hi = lanes_lo;
    for (const auto& v : nodes) {
        speed_lo = std::min(speed_lo, v.spatial_profile.speed_limit);
        speed_hi = std::max(speed_hi, v.spatial_profile.speed_limit);
        lanes_lo = std::min(lanes_lo, v.spatial_profile.lanes);
        lanes_hi = std::max(lanes_hi, v.spatial_profile.lanes);
    }
    const double speed_range = speed_hi - speed_lo;
    const double lane_range = lanes_hi - lanes_lo;

    Eigen::MatrixXd dist(n, n);
    for (int i = 0; i < n; ++i) {
        dist(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            const auto& a = nodes[i].centroid;
            const auto& b = nodes[j].centroid;
            dist(i, j) = dist(j, i) = geo::haversine_m(a.lat, a.lon, b.lat, b.lon);
        }
    }
    auto similarity = [&](int i, int j) {
        return segment_similarity(nodes[i].spatial_profile, nodes[j].spatial_profile,
                                  config.similarity_weights, speed_range, lane_range);
    };

    // Unordered pair -> strongest connectivity type.
    std::map<std::pair<int, int>, ConnType> pairs;
    auto propose = [&](int i, int j, ConnType t) {
        if (i == j) return;
        const auto key = std::minmax(i, j);
        auto [it, inserted] = pairs.emplace(key, t);
        if (!inserted) {
            const double cur = config.phi[static_cast<int>(it->second)];
            const double cand = config.phi[static_cast<int>(t)];
            if (cand > cur || (cand == cur && t < it->second)) it->second = t;
        }
    };

    // (i) topological: member points of two clusters within topo distance
    if (config.topo_distance_m > 0) {
        std::vector<GeoPoint> pts;
        std::vector<int> owner;
        for (const auto& v : nodes) {
            for (const auto& p : v.member_points) {
                pts.push_back(p);
                owner.push_back(v.node_id);
            }
        }
        RadiusIndex index(pts, config.topo_distance_m);
        for (std::size_t p = 0; p < pts.size(); ++p) {
            for (int q : index.query(p)) {
                if (owner[q] != owner[p]) propose(owner[p], owner[q], ConnType::Topological);
            }
        }
    }

    // (ii) spatial: adaptive k nearest centroids
    for (int i = 0; i < n; ++i) {
        int density = 0;
        std::vector<std::pair<double, int>> order;
        order.reserve(n - 1);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            if (dist(i, j) <= config.density_radius_m) ++density;
            order.emplace_back(dist(i, j), j);
        }
        const int k = std::min(adaptive_k(density, config.alpha, config.k_min, config.k_max), n - 1);
        std::partial_sort(order.begin(), order.begin() + k, order.end());
        for (int m = 0; m < k; ++m) propose(i, order[m].second, ConnType::Spatial);
    }

    // (iii) functional: similar segments within the functional radius
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (dist(i, j) <= config.functional_radius_m && similarity(i, j) >= config.functional_threshold) {
                propose(i, j, ConnType::Functional);
            }
        }
    }

    std::size_t dropped = 0;
    for (const auto& [key, type] : pairs) {
        const auto [i, j] = key;
        const double sim = similarity(i, j);
        const double w = edge_weight(dist(i, j), sim, type, config);
        if (!(w > 0)) {
            ++dropped;
            continue;
        }
        for (auto [s, d] : {std::pair{i, j}, std::pair{j, i}}) {
            Edge e;
            e.src = s;
            e.dst = d;
            e.weight = w;
            e.distance = dist(i, j);
            e.similarity = sim;
            e.conn_type = type;
            result.edges.push_back(e);
        }
    }
    if (dropped) {
        result.warnings.push_back(std::to_string(dropped) +
                                  " candidate edges dropped with zero weight (similarity 0 or distance decay underflow)");
    }
    if (result.edges.empty()) {
        result.warnings.push_back("no edges satisfy any connectivity criterion; graph has self-loops only");
    }
    for (int i = 0; i < n; ++i) {
        Edge e;
        e.src = e.dst = i;
        e.distance = 0.0;
        e.similarity = 1.0;
        e.conn_type = ConnType::Topological;
        e.weight = edge_weight(0.0, 1.0, ConnType::Topological, config);
        result.edges.push_back(e);
    }

    for (auto& e : result.edges) {
        e.edge_features = {normalized_distance(e.distance, config.sigma_decay_m), e.similarity, 0.0, 0.0, 0.0};
        e.edge_features[2 + static_cast<int>(e.conn_type)] = 1.0;
    }
    std::sort(result.edges.begin(), result.edges.end(),
              [](const Edge& a, const Edge& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });
    return result;
}

SparseMatrix assemble_adjacency(std::span<const Edge> edges, int n) {
    std::vector<const Edge*> sorted;
    sorted.reserve(edges.size());
    for (const auto& e : edges) {
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) {
            throw DataError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                            ") references a node outside [0," + std::to_string(n) + ")");
        }
        sorted.push_back(&e);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const Edge* a, const Edge* b) { return std::tie(a->src, a->dst) < std::tie(b->src, b->dst); });
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(sorted.size());
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        if (k > 0 && sorted[k]->src == sorted[k - 1]->src && sorted[k]->dst == sorted[k - 1]->dst) {
            if (sorted[k]->weight != sorted[k - 1]->weight) {
                throw DataError("duplicate edge (" + std::to_string(sorted[k]->src) + "," +
                                std::to_string(sorted[k]->dst) + ") with different weights");
            }
            continue;
        }
        triplets.emplace_back(sorted[k]->src, sorted[k]->dst, sorted[k]->weight);
    }
    SparseMatrix a(n, n);
    a.setFromTriplets(triplets.begin(), triplets.end());
    a.makeCompressed();
    return a;
}

double algebraic_connectivity(const SparseMatrix& adjacency) {
    const Eigen::Index n = adjacency.rows();
    if (n < 2 || adjacency.cols() != n) throw DataError("algebraic connectivity needs a square graph with n >= 2");
    Eigen::MatrixXd a = Eigen::MatrixXd(adjacency);
    a = 0.5 * (a + a.transpose()).eval();
    a.diagonal().setZero();
    const Eigen::VectorXd deg = a.rowwise().sum();
    if ((deg.array() <= 0.0).any()) return 0.0;  // isolated node
    const Eigen::VectorXd inv_sqrt = deg.array().rsqrt();
    Eigen::MatrixXd lap = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
    lap.diagonal().array() += 1.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(lap, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericError("eigen-decomposition of the Laplacian failed");
    return std::max(0.0, solver.eigenvalues()[1]);
}

int connected_components(const SparseMatrix& adjacency) {
    const int n = static_cast<int>(adjacency.rows());
    std::vector<std::vector<int>> nbr(n);
    for (int i = 0; i < n; ++i) {
        for (SparseMatrix::InnerIterator it(adjacency, i); it; ++it) {
            if (it.value() != 0.0 && it.col() != i) {
                nbr[i].push_back(static_cast<int>(it.col()));
                nbr[it.col()].push_back(i);
            }
        }
    }
    std::vector<char> seen(n, 0);
    int components = 0;
    for (int s = 0; s < n; ++s) {
        if (seen[s]) continue;
        ++components;
        std::deque<int> q{s};
        seen[s] = 1;
        while (!q.empty()) {
            const int u = q.front();
            q.pop_front();
            for (int v : nbr[u]) {
                if (!seen[v]) seen[v] = 1, q.push_back(v);
            }
        }
    }
    return components;
}

GraphBuildResult build_graph(std::span<const AccidentRecord> records, const GraphConfig& config) {
    if (records.empty()) throw DataError("build_graph: no records");
    GraphBuildResult out;
    BuildParams params;
    params.config = config;

    std::vector<double> widths;
    std::vector<GeoPoint> pts;
    for (const auto& r : records) {
        widths.push_back(r.road_width);
        pts.push_back({r.latitude, r.longitude});
    }
    params.road_width_median = median(widths);
    {
        RadiusIndex local(pts, config.local_radius_m);
        std::vector<double> counts;
        counts.reserve(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) counts.push_back(static_cast<double>(local.query(i).size()));
        params.n_local = std::max(1, static_cast<int>(std::floor(median(std::move(counts)))));
    }
    auto db = dbscan_params(params.road_width_median, config.gps_sigma_m, params.n_local);
    if (config.epsilon_override_m > 0) db.epsilon_m = config.epsilon_override_m;
    if (config.min_samples_override > 0) db.min_samples = config.min_samples_override;
    params.epsilon_m = db.epsilon_m;
    params.min_samples = db.min_samples;

    auto clustering = cluster_segments(records, db.epsilon_m, db.min_samples);
    out.noise_ids = clustering.noise_ids;
    params.noise_count = clustering.noise_ids.size();
    const int n = static_cast<int>(clustering.nodes.size());
    if (n < 2) throw DataError("build_graph: found " + std::to_string(n) + " segment; at least 2 are required");

    GraphConfig cfg = config;
    cfg.topo_distance_m = config.topo_factor * db.epsilon_m;
    params.config.topo_distance_m = cfg.topo_distance_m;
    for (int attempt = 0;; ++attempt) {
        cfg.k_max = config.k_max + attempt * config.repair_k_step;
        auto edges = build_edges(clustering.nodes, cfg);
        auto adjacency = assemble_adjacency(edges.edges, n);
        const double lambda2 = algebraic_connectivity(adjacency);
        if (lambda2 >= config.lambda_min) {
            params.k_max_used = cfg.k_max;
            params.repair_attempts = attempt;
            params.lambda2 = lambda2;
            out.warnings.insert(out.warnings.end(), edges.warnings.begin(), edges.warnings.end());
            out.graph.nodes = std::move(clustering.nodes);
            out.graph.edges = std::move(edges.edges);
            out.graph.adjacency = std::move(adjacency);
            out.graph.build_params = params;
            return out;
        }
        if (!config.repair || attempt >= config.max_repair_attempts) {
            const int comps = connected_components(adjacency);
            throw ConnectivityError("graph connectivity too weak: lambda2 = " + std::to_string(lambda2) +
                                        " < " + std::to_string(config.lambda_min) + " after " +
                                        std::to_string(attempt) + " repair attempts; " +
                                        std::to_string(comps) + " connected components",
                                    lambda2, comps);
        }
    }
}

}  // namespace starn
