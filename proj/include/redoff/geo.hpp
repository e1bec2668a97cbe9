#pragma once

#include <cmath>
#include <numbers>

#include "redoff/error.hpp"
#include "redoff/trace.hpp"

namespace redoff::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

inline void check_coordinates(double lat, double lon) {
  require(std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 && lon >= -180.0 &&
              lon <= 180.0,
          ErrorKind::kValue, "coordinates out of range");
}

/// Wraps an angle in degrees into [0, 360).
inline double wrap_360(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  return r >= 360.0 ? 0.0 : r;
}

/// Great-circle distance in meters between two (lat, lon) points in degrees.
inline double haversine_distance(double lat1, double lon1, double lat2, double lon2) {
  check_coordinates(lat1, lon1);
  check_coordinates(lat2, lon2);
  const double dphi = deg2rad(lat2 - lat1);
  const double dlambda = deg2rad(lon2 - lon1);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double a = s1 * s1 + std::cos(deg2rad(lat1)) * std::cos(deg2rad(lat2)) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(std::min(1.0, a)));
}

inline double haversine_distance(const GeoPoint& a, const GeoPoint& b) {
  return haversine_distance(a.lat, a.lon, b.lat, b.lon);
}

/// Initial bearing from `from` to `to`, clockwise from true north, in [0, 360).
/// Coincident horizontal positions have bearing 0.
inline double bearing(const GeoPoint& from, const GeoPoint& to) {
  if (from.lat == to.lat && from.lon == to.lon) return 0.0;
  const double phi1 = deg2rad(from.lat), phi2 = deg2rad(to.lat);
  const double dlambda = deg2rad(to.lon - from.lon);
  const double y = std::sin(dlambda) * std::cos(phi2);
  const double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlambda);
  return wrap_360(rad2deg(std::atan2(y, x)));
}

struct Polar {
  double distance = 0.0;   // meters, 3-D
  double azimuth = 0.0;    // degrees, bearing drone -> server
  double elevation = 0.0;  // degrees, drone as seen from the server, [-90, 90]
};

/// Drone position relative to a server. Azimuth is the bearing from the drone
/// to the server; elevation is positive when the drone is above the server.
/// Coincident points give (0, 0, 0).
inline Polar polar_relative(const GeoPoint& drone, const GeoPoint& server) {
  const double ground = haversine_distance(drone, server);
  const double dalt = drone.alt - server.alt;
  Polar p;
  p.distance = std::sqrt(ground * ground + dalt * dalt);
  if (p.distance == 0.0) return p;
  p.azimuth = bearing(drone, server);
  p.elevation = rad2deg(std::atan2(dalt, ground));
  return p;
}

/// Signed smallest rotation from `heading` to `azimuth`, in [-180, 180).
inline double relative_heading(double heading, double azimuth) {
  require(heading >= 0.0 && heading < 360.0 && azimuth >= 0.0 && azimuth < 360.0, ErrorKind::kValue,
          "heading and azimuth must lie in [0, 360)");
  double r = std::fmod(azimuth - heading + 180.0, 360.0);
  if (r < 0.0) r += 360.0;
  return r - 180.0;
}

/// Local east/north offsets in meters around a reference point
/// (equirectangular; adequate over tens of meters).
inline GeoPoint offset(const GeoPoint& origin, double east_m, double north_m, double alt_m) {
  const double dlat = rad2deg(north_m / kEarthRadiusM);
  const double dlon = rad2deg(east_m / (kEarthRadiusM * std::cos(deg2rad(origin.lat))));
  return {origin.lat + dlat, origin.lon + dlon, alt_m};
}

}  // namespace redoff::geo
