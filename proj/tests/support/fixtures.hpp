#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "starn/geo.hpp"
#include "starn/ingest.hpp"
#include "starn/model.hpp"

namespace fixtures {

inline starn::AccidentRecord record(std::string id, double lat = 40.0, double lon = -83.0, int severity = 0) {
    starn::AccidentRecord r;
    r.id = std::move(id);
    r.latitude = lat;
    r.longitude = lon;
    r.hour = 8;
    r.day_of_week = 2;
    r.day_of_month = 14;
    r.month = 5;
    r.elevation = 210.0;
    r.slope = 2.5;
    r.curvature = 0.01;
    r.lanes = 2;
    r.road_width = 7.0;
    r.speed_limit = 60.0;
    r.road_type = 1;
    r.land_use = 2;
    r.flood_risk = 0.3;
    r.temperature = 15.0;
    r.precipitation = 0.5;
    r.humidity = 60.0;
    r.wind_speed = 12.0;
    r.visibility = 9.0;
    r.weather_condition = 1;
    r.vehicle_type = 0;
    r.traffic_density = 30.0;
    r.severity = severity;
    return r;
}

// Points in a few tight blobs plus scattered outliers, within a ~300 m box.
inline std::vector<starn::GeoPoint> blob_points(std::mt19937_64& eng, int n) {
    std::uniform_real_distribution<double> box(-150.0, 150.0), jitter(-8.0, 8.0);
    std::uniform_int_distribution<int> blobs(2, 5);
    const int k = blobs(eng);
    std::vector<std::pair<double, double>> centers;
    for (int c = 0; c < k; ++c) centers.emplace_back(box(eng), box(eng));
    std::vector<starn::GeoPoint> pts;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        double north, east;
        if (u(eng) < 0.2) {
            north = box(eng), east = box(eng);
        } else {
            const auto& c = centers[static_cast<std::size_t>(u(eng) * k) % k];
            north = c.first + jitter(eng), east = c.second + jitter(eng);
        }
        starn::GeoPoint p;
        starn::geo::offset_m(40.0, -83.0, north, east, p.lat, p.lon);
        pts.push_back(p);
    }
    return pts;
}

// Random symmetric weighted adjacency with edge probability p, no loops.
inline Eigen::MatrixXd random_adjacency(std::mt19937_64& eng, int n, double p) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (u(eng) < p) a(i, j) = a(j, i) = 0.05 + 0.95 * u(eng);
        }
    }
    return a;
}

inline starn::SparseMatrix to_sparse(const Eigen::MatrixXd& dense) { return dense.sparseView(); }

inline std::vector<int> random_labels(std::mt19937_64& eng, std::size_t n, int k) {
    std::uniform_int_distribution<int> c(0, k - 1);
    std::vector<int> y(n);
    for (auto& v : y) v = c(eng);
    return y;
}

// Rows drawn from a Dirichlet(1) distribution, optionally rounded to a grid
// so that ties occur.
inline Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> random_probs(std::mt19937_64& eng,
                                                                                           std::size_t n, int k,
                                                                                           double grid = 0.0) {
    std::exponential_distribution<double> e(1.0);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> p(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (int c = 0; c < k; ++c) s += (p(i, c) = e(eng));
        for (int c = 0; c < k; ++c) {
            p(i, c) /= s;
            if (grid > 0) p(i, c) = std::round(p(i, c) / grid) * grid;
        }
    }
    return p;
}

template <typename T>
Eigen::MatrixXd dense(const starn::ad::Tensor<T>& t) {
    return t.matrix().template cast<double>();
}

inline starn::ad::Tensor<double> tensor(const Eigen::MatrixXd& m) { return starn::ad::Tensor<double>::from_matrix(m); }

inline oracle::GatHead head_of(const starn::ModelParams<double>& p, int layer, int k) {
    const std::string base = "gat" + std::to_string(layer) + ".head" + std::to_string(k) + ".";
    oracle::GatHead h;
    h.W = dense(p.at(base + "W"));
    const auto& a = p.at(base + "a");
    h.a = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
    h.We = dense(p.at(base + "We"));
    return h;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("starn_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace fixtures
