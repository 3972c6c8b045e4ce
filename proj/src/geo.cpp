#include "starn/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace starn::geo {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
    const double dlat = (lat2 - lat1) * kDeg;
    const double dlon = (lon2 - lon1) * kDeg;
    const double s1 = std::sin(0.5 * dlat);
    const double s2 = std::sin(0.5 * dlon);
    const double a = s1 * s1 + std::cos(lat1 * kDeg) * std::cos(lat2 * kDeg) * s2 * s2;
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

void offset_m(double lat, double lon, double north_m, double east_m, double& out_lat, double& out_lon) {
    out_lat = lat + north_m / kEarthRadiusM / kDeg;
    out_lon = lon + east_m / (kEarthRadiusM * std::cos(lat * kDeg)) / kDeg;
}

}  // namespace starn::geo
