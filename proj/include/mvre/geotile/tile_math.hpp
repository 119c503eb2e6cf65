#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "mvre/error.hpp"

// Web-mercator ("slippy map") tile addressing: 256-pixel tiles, zoom level
// n covers the world with 2^n x 2^n tiles, y grows southwards.

namespace mvre::geotile {

inline constexpr double kMaxLatitude = 85.05113;
inline constexpr double kEarthRadius = 6378137.0;
inline constexpr int kTilePixels = 256;
inline constexpr int kMinLevel = 1;
inline constexpr int kMaxLevel = 23;

class GeoPoint {
 public:
  GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
    if (!(lat >= -kMaxLatitude && lat <= kMaxLatitude))
      throw InvalidArgument("latitude " + std::to_string(lat) + " outside web-mercator range");
    if (!(lon >= -180.0 && lon < 180.0)) throw InvalidArgument("longitude " + std::to_string(lon) + " outside [-180, 180)");
  }
  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

 private:
  double lat_;
  double lon_;
};

struct TileCoord {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  int level = 1;

  friend bool operator==(const TileCoord&, const TileCoord&) = default;
};

inline void validate_level(int level) {
  if (level < kMinLevel || level > kMaxLevel)
    throw InvalidArgument("zoom level " + std::to_string(level) + " outside [1, 23]");
}

inline void validate(const TileCoord& t) {
  validate_level(t.level);
  const std::uint64_t n = std::uint64_t{1} << t.level;
  if (t.x >= n || t.y >= n) throw InvalidArgument("tile coordinate outside the grid of its level");
}

inline TileCoord latlon_to_tile(const GeoPoint& p, int level) {
  validate_level(level);
  const double lat = std::clamp(p.lat(), -kMaxLatitude, kMaxLatitude);
  const double map_size = static_cast<double>(kTilePixels) * std::ldexp(1.0, level);
  const double sin_lat = std::sin(lat * std::numbers::pi / 180.0);
  const double px = (p.lon() + 180.0) / 360.0 * map_size;
  const double py = (0.5 - std::log((1.0 + sin_lat) / (1.0 - sin_lat)) / (4.0 * std::numbers::pi)) * map_size;
  const double max_tile = std::ldexp(1.0, level) - 1.0;
  auto to_tile = [&](double pixel) {
    return static_cast<std::uint32_t>(std::clamp(std::floor(pixel / kTilePixels), 0.0, max_tile));
  };
  return {to_tile(px), to_tile(py), level};
}

/// Geographic extent of a tile.
struct TileBounds {
  double north = 0.0;
  double south = 0.0;
  double west = 0.0;
  double east = 0.0;

  bool contains(const GeoPoint& p) const {
    return p.lat() <= north && p.lat() >= south && p.lon() >= west && p.lon() <= east;
  }
};

inline TileBounds tile_bounds(const TileCoord& t) {
  validate(t);
  const double n = std::ldexp(1.0, t.level);
  auto lon_of = [&](double x) { return x / n * 360.0 - 180.0; };
  auto lat_of = [&](double y) {
    return std::atan(std::sinh(std::numbers::pi * (1.0 - 2.0 * y / n))) * 180.0 / std::numbers::pi;
  };
  return {lat_of(t.y), lat_of(t.y + 1.0), lon_of(t.x), lon_of(t.x + 1.0)};
}

inline GeoPoint tile_center(const TileCoord& t) {
  const auto b = tile_bounds(t);
  const double n = std::ldexp(1.0, t.level);
  const double lat =
      std::atan(std::sinh(std::numbers::pi * (1.0 - 2.0 * (t.y + 0.5) / n))) * 180.0 / std::numbers::pi;
  return GeoPoint(lat, (b.west + b.east) / 2.0);
}

/// Base-4 tile address; one digit per level, most significant level first.
class Quadkey {
 public:
  explicit Quadkey(std::string digits) : digits_(std::move(digits)) {
    if (digits_.empty()) throw InvalidArgument("quadkey must not be empty");
    validate_level(static_cast<int>(digits_.size()));
    for (char c : digits_)
      if (c < '0' || c > '3') throw InvalidArgument("invalid quadkey digit '" + std::string(1, c) + "'");
  }
  const std::string& str() const noexcept { return digits_; }
  int level() const noexcept { return static_cast<int>(digits_.size()); }

  friend bool operator==(const Quadkey&, const Quadkey&) = default;
  friend auto operator<=>(const Quadkey&, const Quadkey&) = default;

 private:
  std::string digits_;
};

inline Quadkey tile_to_quadkey(const TileCoord& t) {
  validate(t);
  std::string digits;
  digits.reserve(static_cast<std::size_t>(t.level));
  for (int i = t.level; i > 0; --i) {
    const std::uint32_t mask = 1u << (i - 1);
    char d = '0';
    if (t.x & mask) d += 1;
    if (t.y & mask) d += 2;
    digits.push_back(d);
  }
  return Quadkey(std::move(digits));
}

inline TileCoord quadkey_to_tile(const Quadkey& q) {
  TileCoord t{0, 0, q.level()};
  for (int i = q.level(); i > 0; --i) {
    const std::uint32_t mask = 1u << (i - 1);
    const int d = q.str()[static_cast<std::size_t>(q.level() - i)] - '0';
    if (d & 1) t.x |= mask;
    if (d & 2) t.y |= mask;
  }
  return t;
}

/// Meters of ground per pixel at the given latitude (degrees) and level.
inline double ground_resolution(double lat, int level) {
  validate_level(level);
  if (!(lat >= -kMaxLatitude && lat <= kMaxLatitude)) throw InvalidArgument("latitude outside web-mercator range");
  return 2.0 * std::numbers::pi * kEarthRadius * std::cos(lat * std::numbers::pi / 180.0) /
         (static_cast<double>(kTilePixels) * std::ldexp(1.0, level));
}

}  // namespace mvre::geotile
