#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rwgan/errors.hpp"

namespace rwgan {

// Dataset manifest: JSON Lines, one record per sample. Paths are stored
// relative to the manifest file so dataset directories stay relocatable.
struct ManifestRecord {
  std::string id; // ICAO code or synthetic id
  std::optional<double> lat, lon;
  std::string sat_path;
  std::string map_path;
  std::optional<std::string> mask_path;
  std::optional<std::string> pair_path;
  std::string split = "train"; // "train" | "val"
  std::string palette = "standard";
};

struct DatasetManifest {
  std::filesystem::path base_dir; // directory of the manifest file
  std::vector<ManifestRecord> records;

  std::filesystem::path resolve(const std::string& rel) const {
    return base_dir / rel;
  }

  std::vector<const ManifestRecord*> split(const std::string& name) const {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records)
      if (r.split == name) out.push_back(&r);
    return out;
  }
};

inline nlohmann::json manifest_record_to_json(const ManifestRecord& r) {
  nlohmann::json j{{"id", r.id},
                   {"sat_path", r.sat_path},
                   {"map_path", r.map_path},
                   {"split", r.split},
                   {"palette", r.palette}};
  if (r.lat) j["lat"] = *r.lat;
  if (r.lon) j["lon"] = *r.lon;
  if (r.mask_path) j["mask_path"] = *r.mask_path;
  if (r.pair_path) j["pair_path"] = *r.pair_path;
  return j;
}

inline ManifestRecord manifest_record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.id = j.at("id").get<std::string>();
  r.sat_path = j.at("sat_path").get<std::string>();
  r.map_path = j.at("map_path").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.palette = j.value("palette", std::string("standard"));
  if (j.contains("lat")) r.lat = j.at("lat").get<double>();
  if (j.contains("lon")) r.lon = j.at("lon").get<double>();
  if (j.contains("mask_path")) r.mask_path = j.at("mask_path").get<std::string>();
  if (j.contains("pair_path")) r.pair_path = j.at("pair_path").get<std::string>();
  return r;
}

inline void save_manifest(const DatasetManifest& m,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("manifest: cannot write " + path.string());
  for (const auto& r : m.records)
    out << manifest_record_to_json(r).dump() << '\n';
}

// Loads and validates: every referenced file must exist.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest: cannot read " + path.string());
  DatasetManifest m;
  m.base_dir = path.has_parent_path() ? path.parent_path()
                                      : std::filesystem::path(".");
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest: bad JSON at line " + std::to_string(line_no) +
                        ": " + e.what());
    }
    ManifestRecord r = manifest_record_from_json(j);
    for (const std::string* p : {&r.sat_path, &r.map_path}) {
      if (!std::filesystem::exists(m.resolve(*p)))
        throw DataError("manifest: missing file " + m.resolve(*p).string());
    }
    if (r.mask_path && !std::filesystem::exists(m.resolve(*r.mask_path)))
      throw DataError("manifest: missing file " + m.resolve(*r.mask_path).string());
    if (r.pair_path && !std::filesystem::exists(m.resolve(*r.pair_path)))
      throw DataError("manifest: missing file " + m.resolve(*r.pair_path).string());
    m.records.push_back(std::move(r));
  }
  return m;
}

} // namespace rwgan
