#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include <nlohmann/json.hpp>

#include "starn/detail/json_util.hpp"
#include "starn/error.hpp"
#include "starn/features.hpp"
#include "starn/geo.hpp"
#include "starn/ingest.hpp"
#include "starn/rng.hpp"

namespace starn {

void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = nlohmann::json{{"grid_rows", c.grid_rows},
                       {"grid_cols", c.grid_cols},
                       {"spacing_m", c.spacing_m},
                       {"origin_lat", c.origin_lat},
                       {"origin_lon", c.origin_lon},
                       {"min_records_per_node", c.min_records_per_node},
                       {"extra_records_mean", c.extra_records_mean},
                       {"gps_sigma_m", c.gps_sigma_m},
                       {"neighbor_radius_m", c.neighbor_radius_m},
                       {"terrain_length_m", c.terrain_length_m},
                       {"beta_spatial", c.beta_spatial},
                       {"beta_temporal", c.beta_temporal},
                       {"beta_external", c.beta_external},
                       {"beta_neighbor", c.beta_neighbor},
                       {"noise_scale", c.noise_scale},
                       {"label_noise", c.label_noise}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
    detail::JsonFields f(j, "synth");
    f.get("grid_rows", c.grid_rows);
    f.get("grid_cols", c.grid_cols);
    f.get("spacing_m", c.spacing_m);
    f.get("origin_lat", c.origin_lat);
    f.get("origin_lon", c.origin_lon);
    f.get("min_records_per_node", c.min_records_per_node);
    f.get("extra_records_mean", c.extra_records_mean);
    f.get("gps_sigma_m", c.gps_sigma_m);
    f.get("neighbor_radius_m", c.neighbor_radius_m);
    f.get("terrain_length_m", c.terrain_length_m);
    f.get("beta_spatial", c.beta_spatial);
    f.get("beta_temporal", c.beta_temporal);
    f.get("beta_external", c.beta_external);
    f.get("beta_neighbor", c.beta_neighbor);
    f.get("noise_scale", c.noise_scale);
    f.get("label_noise", c.label_noise);
    f.finish();
}

nlohmann::json to_json(const SynthTruth& t) {
    return nlohmann::json{
        {"rule",
         "latent score s = beta_spatial.z_spatial(node) + beta_temporal.x_temporal + "
         "beta_external.z_external + beta_neighbor.z_neighbor(node); risk = sigmoid(s); "
         "severity = #{c : s + noise_scale*Logistic(0,1) >= thresholds[c]}, then replaced by a "
         "uniform class with probability label_noise; thresholds[c] = quantile_{(c+1)/4}(s) + "
         "noise_scale*logit((c+1)/4)"},
        {"config", t.config},
        {"seed", t.seed},
        {"thresholds", t.thresholds},
        {"spatial_mean", t.spatial_mean},
        {"spatial_std", t.spatial_std},
        {"external_mean", t.external_mean},
        {"external_std", t.external_std},
        {"neighbor_mean", t.neighbor_mean},
        {"neighbor_std", t.neighbor_std},
        {"node_risk", t.node_risk},
        {"neighbor_risk", t.neighbor_risk},
        {"expected_class_frequency", t.expected_class_frequency},
    };
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

template <std::size_t N>
void standardize_columns(std::vector<std::array<double, N>>& rows, std::array<double, N>& mean,
                         std::array<double, N>& sd) {
    const double n = static_cast<double>(rows.size());
    for (std::size_t c = 0; c < N; ++c) {
        double m = 0;
        for (const auto& r : rows) m += r[c];
        m /= n;
        double var = 0;
        for (const auto& r : rows) var += (r[c] - m) * (r[c] - m);
        const double s = std::sqrt(var / n);
        mean[c] = m;
        sd[c] = s;
        for (auto& r : rows) r[c] = s > 1e-12 ? (r[c] - m) / s : 0.0;
    }
}

template <std::size_t N>
double dot(const std::array<double, N>& a, const std::array<double, N>& b) {
    double s = 0;
    for (std::size_t i = 0; i < N; ++i) s += a[i] * b[i];
    return s;
}

// Draw helpers with explicit arithmetic so output does not depend on the
// standard library's distribution implementations.
struct Draw {
    std::mt19937_64 eng;
    double uniform() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int integer(int lo, int hi) { return lo + static_cast<int>(eng() % static_cast<std::uint64_t>(hi - lo + 1)); }
    double normal(double mu, double sigma) {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return mu + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    double exponential(double mean) { return -mean * std::log(1.0 - uniform()); }
    int poisson(double mean) {
        const double limit = std::exp(-mean);
        int k = 0;
        double p = uniform();
        while (p > limit) {
            ++k;
            p *= uniform();
        }
        return k;
    }
};

double round_to(double x, double step) { return std::round(x / step) * step; }

// Gaussian-kernel smoothing of white noise, rescaled to unit variance.
std::vector<double> smooth_field(std::span<const GeoPoint> centers, double length_m, Draw& draw) {
    const std::size_t n = centers.size();
    std::vector<double> white(n), out(n, 0.0);
    for (auto& w : white) w = draw.normal(0.0, 1.0);
    for (std::size_t v = 0; v < n; ++v) {
        double acc = 0, norm = 0;
        for (std::size_t u = 0; u < n; ++u) {
            const double d = geo::haversine_m(centers[v].lat, centers[v].lon, centers[u].lat, centers[u].lon);
            const double k = std::exp(-0.5 * (d / length_m) * (d / length_m));
            acc += k * white[u];
            norm += k * k;
        }
        out[v] = acc / std::sqrt(norm);
    }
    double mean = 0, var = 0;
    for (double x : out) mean += x;
    mean /= static_cast<double>(n);
    for (double x : out) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (auto& x : out) x = sd > 1e-12 ? (x - mean) / sd : 0.0;
    return out;
}

// Terrain attributes vary smoothly in space; road attributes stay per segment.
void smooth_terrain(std::vector<SpatialProfile>& profiles, std::span<const GeoPoint> centers, double length_m,
                    Draw& draw) {
    const auto elevation = smooth_field(centers, length_m, draw);
    const auto slope = smooth_field(centers, length_m, draw);
    const auto flood = smooth_field(centers, length_m, draw);
    for (std::size_t v = 0; v < profiles.size(); ++v) {
        auto& p = profiles[v];
        p.elevation = round_to(200.0 + 50.0 * elevation[v], 0.01);
        p.slope = round_to(std::abs(4.0 * slope[v]), 0.001);
        p.flood_risk = round_to(0.5 * std::erfc(-flood[v] / std::sqrt(2.0)), 0.001);
    }
}

}  // namespace

std::array<double, 4> severity_probabilities(double score, const std::array<double, 3>& thresholds,
                                             double noise_scale, double label_noise) {
    std::array<double, 5> at_least{1.0, 0.0, 0.0, 0.0, 0.0};
    for (int c = 0; c < 3; ++c) at_least[c + 1] = sigmoid((score - thresholds[c]) / noise_scale);
    std::array<double, 4> p{};
    for (int c = 0; c < 4; ++c) p[c] = (1.0 - label_noise) * (at_least[c] - at_least[c + 1]) + label_noise / 4.0;
    return p;
}

SynthResult synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.grid_rows <= 0 || cfg.grid_cols <= 0) throw ConfigError("synth: grid size must be positive");
    if (!(cfg.spacing_m > 0)) throw ConfigError("synth: spacing_m must be > 0");
    if (cfg.min_records_per_node < 1) throw ConfigError("synth: min_records_per_node must be >= 1");
    if (!(cfg.extra_records_mean >= 0)) throw ConfigError("synth: extra_records_mean must be >= 0");
    if (!(cfg.noise_scale > 0)) throw ConfigError("synth: noise_scale must be > 0");
    if (!(cfg.label_noise >= 0 && cfg.label_noise <= 1)) throw ConfigError("synth: label_noise must be in [0,1]");
    if (!(cfg.gps_sigma_m >= 0)) throw ConfigError("synth: gps_sigma_m must be >= 0");
    if (!(cfg.terrain_length_m >= 0)) throw ConfigError("synth: terrain_length_m must be >= 0");

    Draw draw{rng::engine(seed, "synth")};
    static constexpr double kSpeeds[] = {30, 40, 50, 60, 80, 100};

    const int n_nodes = cfg.grid_rows * cfg.grid_cols;
    std::vector<GeoPoint> centers(n_nodes);
    std::vector<SpatialProfile> profiles(n_nodes);
    for (int r = 0; r < cfg.grid_rows; ++r) {
        for (int c = 0; c < cfg.grid_cols; ++c) {
            const int v = r * cfg.grid_cols + c;
            geo::offset_m(cfg.origin_lat, cfg.origin_lon, r * cfg.spacing_m, c * cfg.spacing_m,
                          centers[v].lat, centers[v].lon);
            auto& p = profiles[v];
            p.lanes = draw.integer(1, 4);
            p.road_width = round_to(3.5 * p.lanes + draw.uniform(0.0, 1.0), 0.01);
            p.speed_limit = kSpeeds[draw.integer(0, 5)];
            p.road_type = draw.integer(0, kRoadTypeCodes - 1);
            p.land_use = draw.integer(0, kLandUseCodes - 1);
            p.elevation = round_to(draw.normal(200.0, 50.0), 0.01);
            p.slope = round_to(std::abs(draw.normal(0.0, 4.0)), 0.001);
            p.curvature = round_to(draw.exponential(0.01), 1e-6);
            p.flood_risk = round_to(draw.uniform(), 0.001);
        }
    }

    if (cfg.terrain_length_m > 0) smooth_terrain(profiles, centers, cfg.terrain_length_m, draw);

    SynthResult out;
    auto& truth = out.truth;
    truth.config = cfg;
    truth.seed = seed;

    std::vector<std::array<double, kSpatialDim>> zs(n_nodes);
    for (int v = 0; v < n_nodes; ++v) zs[v] = encode_spatial(profiles[v]);
    standardize_columns(zs, truth.spatial_mean, truth.spatial_std);
    truth.node_risk.resize(n_nodes);
    for (int v = 0; v < n_nodes; ++v) truth.node_risk[v] = dot(cfg.beta_spatial, zs[v]);

    std::vector<std::array<double, 1>> nb(n_nodes);
    for (int v = 0; v < n_nodes; ++v) {
        double sum = 0;
        int count = 0;
        for (int u = 0; u < n_nodes; ++u) {
            if (u == v) continue;
            if (geo::haversine_m(centers[v].lat, centers[v].lon, centers[u].lat, centers[u].lon) <=
                cfg.neighbor_radius_m) {
                sum += truth.node_risk[u];
                ++count;
            }
        }
        nb[v][0] = count ? sum / count : 0.0;
    }
    std::array<double, 1> nb_mean{}, nb_std{};
    standardize_columns(nb, nb_mean, nb_std);
    truth.neighbor_mean = nb_mean[0];
    truth.neighbor_std = nb_std[0];
    truth.neighbor_risk.resize(n_nodes);
    for (int v = 0; v < n_nodes; ++v) truth.neighbor_risk[v] = nb[v][0];

    // Records
    auto& records = out.records;
    for (int v = 0; v < n_nodes; ++v) {
        const int count = cfg.min_records_per_node + draw.poisson(cfg.extra_records_mean);
        for (int k = 0; k < count; ++k) {
            AccidentRecord r;
            char id[32];
            std::snprintf(id, sizeof(id), "s%05d-%03d", v, k);
            r.id = id;
            geo::offset_m(centers[v].lat, centers[v].lon, draw.normal(0.0, cfg.gps_sigma_m),
                          draw.normal(0.0, cfg.gps_sigma_m), r.latitude, r.longitude);
            r.latitude = round_to(r.latitude, 1e-7);
            r.longitude = round_to(r.longitude, 1e-7);
            r.hour = draw.integer(0, 23);
            r.day_of_week = draw.integer(0, 6);
            r.day_of_month = draw.integer(1, 28);
            r.month = draw.integer(1, 12);
            const auto& p = profiles[v];
            r.elevation = p.elevation;
            r.slope = p.slope;
            r.curvature = p.curvature;
            r.lanes = static_cast<int>(p.lanes);
            r.road_width = p.road_width;
            r.speed_limit = p.speed_limit;
            r.road_type = p.road_type;
            r.land_use = p.land_use;
            r.flood_risk = p.flood_risk;
            r.temperature = round_to(draw.normal(15.0, 10.0), 0.1);
            r.precipitation = draw.uniform() < 0.3 ? round_to(draw.exponential(3.0), 0.01) : 0.0;
            r.humidity = round_to(draw.uniform(20.0, 100.0), 0.1);
            r.wind_speed = round_to(draw.exponential(12.0), 0.1);
            r.visibility = round_to(draw.uniform(0.5, 15.0), 0.01);
            r.weather_condition = draw.integer(0, kWeatherCodes - 1);
            r.vehicle_type = draw.integer(0, kVehicleCodes - 1);
            r.traffic_density = round_to(draw.exponential(30.0), 0.1);
            records.push_back(std::move(r));
            truth.record_node.push_back(v);
        }
    }

    const std::size_t m = records.size();
    std::vector<std::array<double, kExternalDim>> ze(m);
    for (std::size_t i = 0; i < m; ++i) ze[i] = encode_external(records[i]);
    standardize_columns(ze, truth.external_mean, truth.external_std);

    truth.record_score.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const int v = truth.record_node[i];
        const auto xt = encode_temporal(records[i]);
        truth.record_score[i] = truth.node_risk[v] + dot(cfg.beta_temporal, xt) + dot(cfg.beta_external, ze[i]) +
                                cfg.beta_neighbor * truth.neighbor_risk[v];
    }
    for (int c = 0; c < 3; ++c) {
        const double q = (c + 1) / 4.0;
        truth.thresholds[c] = quantile(truth.record_score, q) + cfg.noise_scale * std::log(q / (1.0 - q));
    }

    truth.expected_class_frequency = {0, 0, 0, 0};
    for (std::size_t i = 0; i < m; ++i) {
        const double s = truth.record_score[i];
        const double u = std::clamp(draw.uniform(), 1e-300, 1.0 - 1e-16);
        const double latent = s + cfg.noise_scale * std::log(u / (1.0 - u));
        int severity = 0;
        for (int c = 0; c < 3; ++c) severity += latent >= truth.thresholds[c] ? 1 : 0;
        if (draw.uniform() < cfg.label_noise) severity = draw.integer(0, 3);
        records[i].severity = severity;
        const auto p = severity_probabilities(s, truth.thresholds, cfg.noise_scale, cfg.label_noise);
        for (int c = 0; c < 4; ++c) truth.expected_class_frequency[c] += p[c] / static_cast<double>(m);
    }
    return out;
}

}  // namespace starn
