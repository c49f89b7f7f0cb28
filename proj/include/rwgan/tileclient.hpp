#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "rwgan/errors.hpp"
#include "rwgan/geo.hpp"
#include "rwgan/png_io.hpp"
#include "rwgan/raster_types.hpp"

namespace rwgan::tileclient {

// Optional online acquisition of static map tiles. Provider-generic: the
// base URL comes from configuration and may embed {lat} {lon} {zoom} {size}
// {style} {key} placeholders; without placeholders a standard static-map
// query string is appended. All tests run against a local stub server; the
// offline synthetic path replaces this module everywhere else.

inline constexpr const char* kApiKeyEnv = "RUNWAY_TILE_API_KEY";

enum class Style { satellite, roadmap };

inline std::string style_str(Style s) {
  return s == Style::satellite ? "satellite" : "roadmap";
}

struct ClientConfig {
  std::string provider_base;     // required for any fetch
  double rate_limit_per_s = 1.0; // minimum spacing between network requests
  bool offline = false;          // forces the offline error path
};

struct TileRequest {
  geo::GeoPoint center;
  int zoom = 18;
  int size_px = 1200;
  Style style = Style::satellite;
  std::string provider_base;

  void validate() const {
    if (size_px < 64 || size_px > 1280)
      throw ConfigError("tile request: size_px must be in [64, 1280], got " +
                        std::to_string(size_px));
    if (zoom < 0 || zoom > 22)
      throw ConfigError("tile request: zoom must be in [0, 22]");
    if (!geo::GeoPoint::valid(center.lat, center.lon))
      throw DataError("tile request: invalid center coordinates");
  }

  // Stable identity string; the cache key is its SHA-256.
  std::string canonical() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "lat=%.8f&lon=%.8f&zoom=%d&size=%d&style=%s",
                  center.lat, center.lon, zoom, size_px,
                  style_str(style).c_str());
    return std::string(buf) + "&base=" + provider_base;
  }
};

inline TileRequest build_tile_request(const geo::AirportRecord& airport,
                                      const geo::ZoomSpec& spec, Style style,
                                      const ClientConfig& config) {
  if (config.provider_base.empty())
    throw ConfigError("tile client: provider_base is not configured");
  spec.validate();
  TileRequest req{airport.location, spec.zoom, spec.image_px, style,
                  config.provider_base};
  req.validate();
  return req;
}

namespace detail {

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    if (ctx) EVP_MD_CTX_free(ctx);
    throw Error("tile client: SHA-256 failed", 1);
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(size_t(len) * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

inline void replace_all(std::string& s, const std::string& from,
                        const std::string& to) {
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

struct UrlParts {
  std::string scheme_host; // e.g. http://127.0.0.1:8080
  std::string path;        // begins with /
};

inline UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("tile client: provider_base must include a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("tile cache: cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("tile cache: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

} // namespace detail

inline std::string cache_key(const TileRequest& req) {
  return detail::sha256_hex(req.canonical());
}

inline std::string build_url(const TileRequest& req, const std::string& key) {
  char num[64];
  std::string url = req.provider_base;
  if (url.find('{') != std::string::npos) {
    std::snprintf(num, sizeof num, "%.8f", req.center.lat);
    detail::replace_all(url, "{lat}", num);
    std::snprintf(num, sizeof num, "%.8f", req.center.lon);
    detail::replace_all(url, "{lon}", num);
    detail::replace_all(url, "{zoom}", std::to_string(req.zoom));
    detail::replace_all(url, "{size}", std::to_string(req.size_px));
    detail::replace_all(url, "{style}", style_str(req.style));
    detail::replace_all(url, "{key}", key);
    return url;
  }
  std::snprintf(num, sizeof num, "%.8f,%.8f", req.center.lat, req.center.lon);
  url += url.find('?') == std::string::npos ? "?" : "&";
  url += "center=" + std::string(num) + "&zoom=" + std::to_string(req.zoom) +
         "&size=" + std::to_string(req.size_px) + "x" +
         std::to_string(req.size_px) + "&maptype=" + style_str(req.style) +
         "&key=" + key;
  return url;
}

struct FetchResult {
  raster::RasterImage sat;
  raster::RasterImage map;
  bool sat_from_cache = false;
  bool map_from_cache = false;
};

// Serializes network access (rate limit) across threads; cache reads are
// lock-free. Cache layout: <cache_dir>/<sha256(request)>.bin plus a
// .meta.json sidecar with the request fields.
class TileClient {
public:
  explicit TileClient(ClientConfig config) : config_(std::move(config)) {}

  FetchResult fetch_pair(const TileRequest& req_sat, const TileRequest& req_map,
                         const std::filesystem::path& cache_dir) {
    req_sat.validate();
    req_map.validate();
    if (req_sat.center.lat != req_map.center.lat ||
        req_sat.center.lon != req_map.center.lon ||
        req_sat.zoom != req_map.zoom || req_sat.size_px != req_map.size_px)
      throw DataError("fetch_pair: paired requests must share center, zoom and size");

    std::filesystem::create_directories(cache_dir);
    FetchResult result;
    std::string sat_bytes, map_bytes;
    result.sat_from_cache = read_cache(req_sat, cache_dir, sat_bytes);
    result.map_from_cache = read_cache(req_map, cache_dir, map_bytes);

    if (!result.sat_from_cache || !result.map_from_cache) {
      if (config_.offline)
        throw OfflineError(
            "tile client: offline mode is set; build the dataset with "
            "--source synthetic or drop --offline");
      const char* key = std::getenv(kApiKeyEnv);
      if (!key || !*key)
        throw ConfigError(std::string("tile client: credential missing; set ") +
                          kApiKeyEnv);
      if (!result.sat_from_cache) sat_bytes = http_get(req_sat, key);
      if (!result.map_from_cache) map_bytes = http_get(req_map, key);
    }

    // decode before committing anything so the cache gains both entries or
    // neither
    result.sat = raster::decode_png(
        reinterpret_cast<const uint8_t*>(sat_bytes.data()), sat_bytes.size());
    result.map = raster::decode_png(
        reinterpret_cast<const uint8_t*>(map_bytes.data()), map_bytes.size());

    if (!result.sat_from_cache) write_cache(req_sat, cache_dir, sat_bytes);
    if (!result.map_from_cache) write_cache(req_map, cache_dir, map_bytes);
    return result;
  }

private:
  bool read_cache(const TileRequest& req, const std::filesystem::path& dir,
                  std::string& bytes) {
    const auto path = dir / (cache_key(req) + ".bin");
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    bytes.assign(std::istreambuf_iterator<char>(in),
                 std::istreambuf_iterator<char>());
    return true;
  }

  void write_cache(const TileRequest& req, const std::filesystem::path& dir,
                   const std::string& bytes) {
    const std::string key = cache_key(req);
    detail::write_file_atomic(dir / (key + ".bin"), bytes);
    nlohmann::json meta{{"lat", req.center.lat},
                        {"lon", req.center.lon},
                        {"zoom", req.zoom},
                        {"size_px", req.size_px},
                        {"style", style_str(req.style)},
                        {"provider_base", req.provider_base}};
    detail::write_file_atomic(dir / (key + ".meta.json"), meta.dump());
  }

  std::string http_get(const TileRequest& req, const std::string& key) {
    std::unique_lock lock(mutex_);
    if (config_.rate_limit_per_s > 0) {
      using clock = std::chrono::steady_clock;
      const auto interval = std::chrono::duration_cast<clock::duration>(
          std::chrono::duration<double>(1.0 / config_.rate_limit_per_s));
      const auto now = clock::now();
      if (have_last_ && now < last_request_ + interval)
        std::this_thread::sleep_for(last_request_ + interval - now);
      last_request_ = clock::now();
      have_last_ = true;
    }
    const auto parts = detail::split_url(build_url(req, key));
    httplib::Client cli(parts.scheme_host);
    cli.set_connection_timeout(10);
    cli.set_read_timeout(30);
    auto res = cli.Get(parts.path);
    if (!res)
      throw NetworkError("tile client: transport failure contacting " +
                         parts.scheme_host);
    if (res->status < 200 || res->status >= 300)
      throw NetworkError("tile client: HTTP " + std::to_string(res->status) +
                             " from provider",
                         res->status);
    return res->body;
  }

  ClientConfig config_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point last_request_{};
  bool have_last_ = false;
};

} // namespace rwgan::tileclient
