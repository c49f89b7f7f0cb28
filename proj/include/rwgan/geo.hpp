#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rwgan/errors.hpp"
#include "rwgan/raster_types.hpp"

namespace rwgan::geo {

inline constexpr double kEarthRadiusM = 6378137.0; // spherical Mercator
inline constexpr double kMaxMercatorLat = 85.05;
inline constexpr int kTileSize = 256;

struct GeoPoint {
  double lat = 0.0; // degrees, [-90, 90]
  double lon = 0.0; // degrees, [-180, 180]

  static bool valid(double lat, double lon) {
    return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 &&
           lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
  }

  static GeoPoint checked(double lat, double lon) {
    if (!valid(lat, lon))
      throw DataError("geo: coordinates out of range: lat=" +
                      std::to_string(lat) + " lon=" + std::to_string(lon));
    return {lat, lon};
  }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct AirportRecord {
  std::string icao; // [A-Z0-9]{4}
  std::string name;
  GeoPoint location;

  friend bool operator==(const AirportRecord&, const AirportRecord&) = default;
};

struct ZoomSpec {
  int zoom = 18;
  int image_px = 1200; // square side

  void validate() const {
    if (zoom < 0 || zoom > 22)
      throw ConfigError("geo: zoom must be in [0, 22], got " + std::to_string(zoom));
    if (image_px <= 0)
      throw ConfigError("geo: image_px must be positive");
  }
};

inline bool valid_icao(const std::string& s) {
  if (s.size() != 4) return false;
  for (char c : s)
    if (!((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'))) return false;
  return true;
}

enum class DbFormat { partow_colon, simple_csv };

struct ParseResult {
  std::vector<AirportRecord> records;
  size_t skipped = 0; // lines rejected (bad icao, bad/placeholder coords, malformed)
};

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace((unsigned char)s[pos])) ++pos;
    if (pos != s.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace((unsigned char)s[a])) ++a;
  while (b > a && std::isspace((unsigned char)s[b - 1])) --b;
  return s.substr(a, b - a);
}

} // namespace detail

// Parses the airport database. Both formats share the convention: first
// field is the ICAO code, the last two fields are decimal latitude and
// longitude; anything between is the free-text name (commas/colons in names
// therefore survive). Rows with (0,0) coordinates are unknown-location
// placeholders and are skipped.
inline ParseResult parse_airport_db(std::istream& in, DbFormat format) {
  if (!in.good()) throw IoError("geo: airport database stream unreadable");
  const char sep = format == DbFormat::partow_colon ? ':' : ',';
  ParseResult result;
  std::string line;
  bool first_line = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    auto fields = detail::split(trimmed, sep);
    // optional "icao,name,lat,lon" header
    if (first_line && format == DbFormat::simple_csv && !fields.empty() &&
        detail::trim(fields[0]) == "icao") {
      first_line = false;
      continue;
    }
    first_line = false;
    if (fields.size() < 3) {
      ++result.skipped;
      continue;
    }
    std::string icao = detail::trim(fields[0]);
    auto lat = detail::parse_double(detail::trim(fields[fields.size() - 2]));
    auto lon = detail::parse_double(detail::trim(fields[fields.size() - 1]));
    if (!valid_icao(icao) || !lat || !lon || !GeoPoint::valid(*lat, *lon) ||
        (*lat == 0.0 && *lon == 0.0)) {
      ++result.skipped;
      continue;
    }
    std::string name;
    for (size_t i = 1; i + 2 < fields.size(); ++i) {
      if (!name.empty()) name += sep;
      name += fields[i];
    }
    result.records.push_back({icao, detail::trim(name), {*lat, *lon}});
  }
  if (in.bad()) throw IoError("geo: I/O failure while reading airport database");
  if (result.records.empty())
    throw DataError("geo: no valid airport records found (empty dataset)");
  return result;
}

// simple_csv serialization; round-trips bit-exactly through parse_airport_db.
inline void write_airport_csv(std::ostream& out,
                              const std::vector<AirportRecord>& records) {
  char buf[64];
  out << "icao,name,lat,lon\n";
  for (const auto& r : records) {
    out << r.icao << ',' << r.name << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.location.lat);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", r.location.lon);
    out << buf << '\n';
  }
}

inline void check_projectable(double lat) {
  if (!(std::fabs(lat) < kMaxMercatorLat))
    throw DataError("geo: latitude " + std::to_string(lat) +
                    " outside Web-Mercator projection range (|lat| < 85.05)");
}

// Meters per pixel at the given latitude and zoom.
inline double ground_resolution(double lat, int zoom) {
  if (zoom < 0 || zoom > 22)
    throw ConfigError("geo: zoom must be in [0, 22]");
  check_projectable(lat);
  return std::cos(lat * M_PI / 180.0) * 2.0 * M_PI * kEarthRadiusM /
         (double(kTileSize) * std::exp2(double(zoom)));
}

struct WorldPixel {
  double x = 0.0;
  double y = 0.0; // grows southward
};

// Global pixel coordinates on the 256*2^zoom square canvas.
inline WorldPixel latlon_to_world_pixel(const GeoPoint& p, int zoom) {
  if (zoom < 0 || zoom > 22)
    throw ConfigError("geo: zoom must be in [0, 22]");
  check_projectable(p.lat);
  const double canvas = double(kTileSize) * std::exp2(double(zoom));
  const double lat_rad = p.lat * M_PI / 180.0;
  double x = (p.lon + 180.0) / 360.0 * canvas;
  double y = (1.0 - std::log(std::tan(lat_rad) + 1.0 / std::cos(lat_rad)) / M_PI) / 2.0 * canvas;
  return {x, y};
}

inline GeoPoint world_pixel_to_latlon(const WorldPixel& wp, int zoom) {
  const double canvas = double(kTileSize) * std::exp2(double(zoom));
  double lon = wp.x / canvas * 360.0 - 180.0;
  double n = M_PI * (1.0 - 2.0 * wp.y / canvas);
  double lat = 180.0 / M_PI * std::atan(std::sinh(n));
  return {lat, lon};
}

struct Footprint {
  double side_m = 0.0;
  double area_sq_mi = 0.0;
  std::array<GeoPoint, 4> bbox; // NW, NE, SE, SW
};

inline constexpr double kSqKmPerSqMi = 2.589988;

// Ground footprint of a size_px-square image centered on `center`.
inline Footprint footprint(const GeoPoint& center, const ZoomSpec& spec) {
  spec.validate();
  Footprint fp;
  fp.side_m = double(spec.image_px) * ground_resolution(center.lat, spec.zoom);
  const double side_km = fp.side_m / 1000.0;
  fp.area_sq_mi = side_km * side_km / kSqKmPerSqMi;
  WorldPixel c = latlon_to_world_pixel(center, spec.zoom);
  const double h = double(spec.image_px) / 2.0;
  fp.bbox[0] = world_pixel_to_latlon({c.x - h, c.y - h}, spec.zoom); // NW
  fp.bbox[1] = world_pixel_to_latlon({c.x + h, c.y - h}, spec.zoom); // NE
  fp.bbox[2] = world_pixel_to_latlon({c.x + h, c.y + h}, spec.zoom); // SE
  fp.bbox[3] = world_pixel_to_latlon({c.x - h, c.y + h}, spec.zoom); // SW
  return fp;
}

// Equirectangular scatter of the airport distribution: white background, one
// dark dot per record. Dots are 1 px on canvases >= 1024 wide, 2 px below.
inline raster::RasterImage plot_airports(const std::vector<AirportRecord>& records,
                                         int width, int height) {
  if (width < 64 || height < 64)
    throw ConfigError("plot_airports: canvas must be at least 64x64");
  raster::RasterImage img(width, height, {255, 255, 255});
  const raster::Rgb dot = {40, 40, 48};
  const int dot_px = width >= 1024 ? 1 : 2;
  for (const auto& r : records) {
    const double fx = (r.location.lon + 180.0) / 360.0 * double(width);
    const double fy = (90.0 - r.location.lat) / 180.0 * double(height);
    const int x = std::clamp(int(fx), 0, width - 1);
    const int y = std::clamp(int(fy), 0, height - 1);
    for (int dy = 0; dy < dot_px; ++dy)
      for (int dx = 0; dx < dot_px; ++dx) {
        const int px = std::min(x + dx, width - 1);
        const int py = std::min(y + dy, height - 1);
        img.set(px, py, dot);
      }
  }
  return img;
}

} // namespace rwgan::geo
