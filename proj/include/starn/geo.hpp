#pragma once

namespace starn::geo {

inline constexpr double kEarthRadiusM = 6371008.8;

// Great-circle distance in meters between two (lat, lon) points in degrees.
double haversine_m(double lat1, double lon1, double lat2, double lon2);

// Offset a point by (north, east) meters on a local tangent plane.
void offset_m(double lat, double lon, double north_m, double east_m, double& out_lat, double& out_lon);

}  // namespace starn::geo
