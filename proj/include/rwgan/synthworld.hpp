#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "rwgan/errors.hpp"
#include "rwgan/manifest.hpp"
#include "rwgan/png_io.hpp"
#include "rwgan/raster.hpp"
#include "rwgan/rng.hpp"

namespace rwgan::synthworld {

// Deterministic runway-scene generator. Every scene is a registered
// (satellite-style render, map-style render, ground-truth mask) triple fully
// determined by its seed. Randomness comes only from the xoshiro256**/
// splitmix64 pair in rng.hpp, so triples reproduce across platforms.

enum class Layout { single, parallel, cross, three_way, five_way, loop, urban };

inline std::string layout_str(Layout l) {
  switch (l) {
    case Layout::single: return "single";
    case Layout::parallel: return "parallel";
    case Layout::cross: return "cross";
    case Layout::three_way: return "three_way";
    case Layout::five_way: return "five_way";
    case Layout::loop: return "loop";
    case Layout::urban: return "urban";
  }
  return "?";
}

inline Layout layout_from_str(const std::string& s) {
  if (s == "single") return Layout::single;
  if (s == "parallel") return Layout::parallel;
  if (s == "cross") return Layout::cross;
  if (s == "three_way") return Layout::three_way;
  if (s == "five_way") return Layout::five_way;
  if (s == "loop") return Layout::loop;
  if (s == "urban") return Layout::urban;
  throw ConfigError("synthworld: unknown layout '" + s + "'");
}

struct SceneSpec {
  uint64_t seed = 0;
  int size_px = 256; // one of {64, 128, 256, 600}
  Layout layout = Layout::single;
  raster::Palette palette = raster::standard_palette();
  bool label_clutter = false;

  void validate() const {
    if (size_px != 64 && size_px != 128 && size_px != 256 && size_px != 600)
      throw ConfigError("synthworld: size_px must be one of {64,128,256,600}");
    palette.validate();
  }
};

struct SceneSample {
  raster::RasterImage sat;
  raster::RasterImage map;
  raster::Mask mask;
  SceneSpec spec;
};

namespace detail {

// Runway pieces in unit coordinates. A strip is an oriented rectangle
// running from `along` in [-half_len, +half_len] around (cx, cy); a ring is
// an annulus. Arms (half-strips out of a junction) reuse Strip with the
// center displaced along the direction.
struct Strip {
  double cx, cy;
  double angle;    // radians
  double half_len; // along the axis
  double half_w;   // across the axis

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double along = dx * ca + dy * sa;
    const double across = -dx * sa + dy * ca;
    return std::fabs(along) <= half_len && std::fabs(across) <= half_w;
  }

  // signed coordinates for marking placement
  std::pair<double, double> local(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double ca = std::cos(angle), sa = std::sin(angle);
    return {dx * ca + dy * sa, -dx * sa + dy * ca};
  }
};

struct Ring {
  double cx, cy, radius, half_w;
  bool contains(double x, double y) const {
    const double d = std::hypot(x - cx, y - cy);
    return std::fabs(d - radius) <= half_w;
  }
};

struct Box {
  double x0, y0, x1, y1;
  bool contains(double x, double y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};

struct RoadLine {
  double x0, y0, x1, y1;
  double half_w;
  bool contains(double x, double y) const {
    const double vx = x1 - x0, vy = y1 - y0;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((x - x0) * vx + (y - y0) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double px = x0 + t * vx, py = y0 + t * vy;
    return std::hypot(x - px, y - py) <= half_w;
  }
};

// Bilinear value noise: 3 octaves of a hashed random lattice. Lattice value
// at integer cell (i,j) of octave o is splitmix64-derived from the seed, so
// the field is pure in (seed, x, y).
inline double lattice_value(uint64_t seed, int64_t i, int64_t j, int octave) {
  const uint64_t h = mix64(seed + uint64_t(octave) * 0x9e3779b97f4a7c15ULL,
                           uint64_t(i) * 0xd1342543de82ef95ULL,
                           uint64_t(j) * 0xaf251af3b0f025b5ULL);
  return double(h >> 11) * 0x1.0p-53;
}

inline double value_noise(uint64_t seed, double x, double y) {
  double total = 0.0, amp = 1.0, freq = 8.0, norm = 0.0;
  for (int o = 0; o < 3; ++o) {
    const double fx = x * freq, fy = y * freq;
    const int64_t ix = int64_t(std::floor(fx)), iy = int64_t(std::floor(fy));
    const double tx = fx - double(ix), ty = fy - double(iy);
    const double v00 = lattice_value(seed, ix, iy, o);
    const double v10 = lattice_value(seed, ix + 1, iy, o);
    const double v01 = lattice_value(seed, ix, iy + 1, o);
    const double v11 = lattice_value(seed, ix + 1, iy + 1, o);
    const double top = v00 * (1 - tx) + v10 * tx;
    const double bot = v01 * (1 - tx) + v11 * tx;
    total += (top * (1 - ty) + bot * ty) * amp;
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return total / norm;
}

inline raster::Rgb lerp_rgb(raster::Rgb a, raster::Rgb b, double t) {
  raster::Rgb out;
  for (int c = 0; c < 3; ++c)
    out[c] = uint8_t(std::clamp(
        std::lround(double(a[c]) * (1.0 - t) + double(b[c]) * t), 0L, 255L));
  return out;
}

inline uint8_t jitter_channel(uint8_t v, double amount) {
  return uint8_t(std::clamp(std::lround(double(v) + amount), 0L, 255L));
}

} // namespace detail

// Geometry of a scene before rendering; exposed so evaluation code and tests
// can reason about arms and junctions without re-deriving the layout.
struct SceneGeometry {
  std::vector<detail::Strip> strips; // one per arm/runway
  std::vector<detail::Ring> rings;
  std::vector<detail::Box> buildings;    // urban only
  std::vector<detail::RoadLine> roads;   // urban only
  double junction_x = 0.5, junction_y = 0.5;
  int arm_count = 0;      // arms radiating from the junction (0 if none)
  double max_half_w = 0;  // widest runway piece, unit coords
  uint64_t texture_seed = 0;
  uint64_t clutter_seed = 0;
};

inline SceneGeometry scene_geometry(const SceneSpec& spec) {
  spec.validate();
  SceneGeometry geo;
  Rng rng(mix64(spec.seed, 0x5ce9e));
  geo.texture_seed = mix64(spec.seed, 0x7e87a1);
  geo.clutter_seed = mix64(spec.seed, 0xc1a77e7);

  const double cx = 0.5 + rng.uniform(-0.04, 0.04);
  const double cy = 0.5 + rng.uniform(-0.04, 0.04);
  geo.junction_x = cx;
  geo.junction_y = cy;

  auto add_arm = [&](double angle, double len, double half_w) {
    // half-strip from the junction outward
    geo.strips.push_back({cx + std::cos(angle) * len / 2.0,
                          cy + std::sin(angle) * len / 2.0, angle, len / 2.0,
                          half_w});
    geo.max_half_w = std::max(geo.max_half_w, half_w);
  };

  switch (spec.layout) {
    case Layout::single:
    case Layout::urban: {
      const double angle = rng.uniform(0.0, M_PI);
      const double half_len = rng.uniform(0.36, 0.44);
      const double half_w = rng.uniform(0.04, 0.10);
      geo.strips.push_back({cx, cy, angle, half_len, half_w});
      geo.max_half_w = half_w;
      break;
    }
    case Layout::parallel: {
      const double angle = rng.uniform(0.0, M_PI);
      const double half_len = rng.uniform(0.34, 0.42);
      const double half_w = rng.uniform(0.04, 0.065);
      const double gap = rng.uniform(0.09, 0.14);
      const double ox = -std::sin(angle) * gap, oy = std::cos(angle) * gap;
      geo.strips.push_back({cx + ox, cy + oy, angle, half_len, half_w});
      geo.strips.push_back({cx - ox, cy - oy, angle, half_len, half_w});
      geo.max_half_w = half_w;
      break;
    }
    case Layout::cross: {
      const double angle = rng.uniform(0.0, M_PI);
      const double cross = angle + M_PI / 2.0 + rng.uniform(-0.25, 0.25);
      geo.strips.push_back({cx, cy, angle, rng.uniform(0.36, 0.44),
                            rng.uniform(0.04, 0.07)});
      geo.strips.push_back({cx, cy, cross, rng.uniform(0.32, 0.42),
                            rng.uniform(0.04, 0.07)});
      for (const auto& s : geo.strips)
        geo.max_half_w = std::max(geo.max_half_w, s.half_w);
      break;
    }
    case Layout::three_way: {
      const double base = rng.uniform(0.0, 2.0 * M_PI);
      const double half_w = rng.uniform(0.04, 0.065);
      const double len = rng.uniform(0.36, 0.44);
      for (int i = 0; i < 3; ++i) {
        const double jitter = rng.uniform(-0.15, 0.15);
        add_arm(base + double(i) * 2.0 * M_PI / 3.0 + jitter, len, half_w);
      }
      geo.arm_count = 3;
      break;
    }
    case Layout::five_way: {
      const double base = rng.uniform(0.0, 2.0 * M_PI);
      const double half_w = rng.uniform(0.04, 0.055);
      const double len = rng.uniform(0.36, 0.44);
      for (int i = 0; i < 5; ++i) {
        const double jitter = rng.uniform(-0.06, 0.06);
        add_arm(base + double(i) * 2.0 * M_PI / 5.0 + jitter, len, half_w);
      }
      geo.arm_count = 5;
      break;
    }
    case Layout::loop: {
      geo.rings.push_back({cx, cy, rng.uniform(0.24, 0.30),
                           rng.uniform(0.035, 0.055)});
      geo.max_half_w = geo.rings.back().half_w;
      break;
    }
  }

  if (spec.layout == Layout::urban) {
    const int n_buildings = 8 + int(rng.next_below(8));
    for (int i = 0; i < n_buildings; ++i) {
      const double w = rng.uniform(0.03, 0.09), h = rng.uniform(0.03, 0.09);
      const double x = rng.uniform(0.02, 0.98 - w), y = rng.uniform(0.02, 0.98 - h);
      geo.buildings.push_back({x, y, x + w, y + h});
    }
    const int n_roads = 1 + int(rng.next_below(3));
    for (int i = 0; i < n_roads; ++i) {
      // edge-to-edge line
      const bool horizontal = rng.next_double() < 0.5;
      const double a = rng.uniform(0.05, 0.95), b = rng.uniform(0.05, 0.95);
      const double half_w = rng.uniform(0.5, 1.5) / double(spec.size_px);
      if (horizontal)
        geo.roads.push_back({0.0, a, 1.0, b, half_w});
      else
        geo.roads.push_back({a, 0.0, b, 1.0, half_w});
    }
  }
  return geo;
}

namespace detail {

inline bool runway_covers(const SceneGeometry& geo, double x, double y,
                          const std::set<int>& dropped) {
  for (size_t i = 0; i < geo.strips.size(); ++i)
    if (!dropped.count(int(i)) && geo.strips[i].contains(x, y)) return true;
  for (const auto& r : geo.rings)
    if (r.contains(x, y)) return true;
  return false;
}

// Dashed centerline + threshold bars, satellite render only.
inline bool marking_covers(const SceneGeometry& geo, double x, double y,
                           const std::set<int>& dropped) {
  for (size_t i = 0; i < geo.strips.size(); ++i) {
    if (dropped.count(int(i))) continue;
    const auto& s = geo.strips[i];
    if (!s.contains(x, y)) continue;
    auto [along, across] = s.local(x, y);
    const double dash = 0.045;
    if (std::fabs(across) < std::max(0.004, s.half_w * 0.08) &&
        std::fabs(along) < s.half_len * 0.88 &&
        std::fmod(std::fabs(along), dash) < dash * 0.55)
      return true;
    // threshold bars near each end
    if (std::fabs(across) < s.half_w * 0.7 &&
        std::fabs(along) > s.half_len * 0.86 &&
        std::fabs(along) < s.half_len * 0.93)
      return true;
  }
  return false;
}

} // namespace detail

// Renders a scene. `dropped_arms` omits the given strip indices from all
// three outputs; the faulty-map workflow uses it to fabricate published maps
// that disagree with current imagery.
inline SceneSample generate_scene(const SceneSpec& spec,
                                  const std::set<int>& dropped_arms = {}) {
  spec.validate();
  const SceneGeometry geo = scene_geometry(spec);
  const int size = spec.size_px;

  const raster::Rgb map_bg = spec.palette.color_of("background");
  const raster::Rgb map_runway = spec.palette.color_of("runway");
  const bool has_building = spec.palette.has_class("building");
  const bool has_road = spec.palette.has_class("road");
  const raster::Rgb map_building =
      has_building ? spec.palette.color_of("building") : map_bg;
  const raster::Rgb map_road = has_road ? spec.palette.color_of("road") : map_bg;

  const raster::Rgb grass = {74, 106, 58};
  const raster::Rgb soil = {132, 112, 78};
  const raster::Rgb asphalt = {96, 96, 100};
  const raster::Rgb marking = {236, 236, 236};
  const raster::Rgb sat_building = {158, 150, 142};
  const raster::Rgb sat_road = {70, 70, 74};

  SceneSample sample;
  sample.spec = spec;
  sample.sat = raster::RasterImage(size, size);
  sample.map = raster::RasterImage(size, size, map_bg);
  sample.mask = raster::Mask(size, size);

  for (int py = 0; py < size; ++py) {
    const double y = (double(py) + 0.5) / double(size);
    for (int px = 0; px < size; ++px) {
      const double x = (double(px) + 0.5) / double(size);
      const bool on_runway = detail::runway_covers(geo, x, y, dropped_arms);

      // satellite render
      raster::Rgb sat_c;
      if (on_runway) {
        const double tex = detail::value_noise(geo.texture_seed ^ 1, x, y);
        sat_c = detail::lerp_rgb(asphalt, {118, 118, 122}, tex);
        if (detail::marking_covers(geo, x, y, dropped_arms)) sat_c = marking;
      } else {
        bool covered = false;
        for (const auto& bld : geo.buildings)
          if (bld.contains(x, y)) {
            const double tex = detail::value_noise(geo.texture_seed ^ 2, x, y);
            sat_c = detail::lerp_rgb(sat_building, {178, 172, 160}, tex);
            covered = true;
            break;
          }
        if (!covered)
          for (const auto& rd : geo.roads)
            if (rd.contains(x, y)) {
              sat_c = sat_road;
              covered = true;
              break;
            }
        if (!covered) {
          const double t = detail::value_noise(geo.texture_seed, x, y);
          const double fine = detail::value_noise(geo.texture_seed ^ 3, x * 4, y * 4);
          sat_c = detail::lerp_rgb(grass, soil, t);
          for (int c = 0; c < 3; ++c)
            sat_c[c] = detail::jitter_channel(sat_c[c], (fine - 0.5) * 14.0);
        }
      }
      sample.sat.set(px, py, sat_c);

      // map render: buildings and roads under the runway class
      raster::Rgb map_c = map_bg;
      if (!on_runway) {
        for (const auto& bld : geo.buildings)
          if (bld.contains(x, y)) {
            map_c = map_building;
            break;
          }
        if (map_c == map_bg)
          for (const auto& rd : geo.roads)
            if (rd.contains(x, y)) {
              map_c = map_road;
              break;
            }
      } else {
        map_c = map_runway;
      }
      sample.map.set(px, py, map_c);
      sample.mask.set(px, py, on_runway);
    }
  }

  // glyph-like label clutter, map only, kept off the runway so the mask
  // remains exact
  if (spec.label_clutter) {
    Rng rng(geo.clutter_seed);
    const raster::Rgb ink = {64, 60, 58};
    const int n = 5 + int(rng.next_below(8));
    for (int i = 0; i < n; ++i) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        const int gw = 2 + int(rng.next_below(5));
        const int gh = 2 + int(rng.next_below(3));
        const int gx = int(rng.next_below(uint64_t(std::max(1, size - gw))));
        const int gy = int(rng.next_below(uint64_t(std::max(1, size - gh))));
        bool clear = true;
        for (int yy = gy; yy < gy + gh && clear; ++yy)
          for (int xx = gx; xx < gx + gw && clear; ++xx)
            if (sample.mask.get(xx, yy)) clear = false;
        if (!clear) continue;
        for (int yy = gy; yy < gy + gh; ++yy)
          for (int xx = gx; xx < gx + gw; ++xx) sample.map.set(xx, yy, ink);
        break;
      }
    }
  }
  return sample;
}

// Writes n scenes (seeds base_seed + index) under out_dir in both training
// layouts: sat/ map/ mask/ plus joined pairs/ for the paired trainer and A/
// (satellite) and B/ (map) folders, capped at 256 px, for the unpaired one.
// The manifest is written as manifest.jsonl, ordered by index.
inline DatasetManifest generate_dataset(int n, uint64_t base_seed,
                                        const SceneSpec& spec_template,
                                        const std::filesystem::path& out_dir,
                                        double split_frac,
                                        const std::string& palette_name = "standard") {
  if (n < 1) throw ConfigError("generate_dataset: n must be >= 1");
  if (!(split_frac > 0.0 && split_frac < 1.0))
    throw ConfigError("generate_dataset: split_frac must be in (0, 1)");
  spec_template.validate();

  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"sat", "map", "mask", "pairs", "A", "B"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec)
      throw IoError("generate_dataset: cannot create " +
                    (out_dir / sub).string() + ": " + ec.message());
  }

  const int n_train = int(std::llround(double(n) * split_frac));
  const int ab_px = std::min(spec_template.size_px, 256);

  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  char name[32];
  for (int i = 0; i < n; ++i) {
    SceneSpec spec = spec_template;
    spec.seed = base_seed + uint64_t(i);
    SceneSample sample = generate_scene(spec);

    std::snprintf(name, sizeof name, "%06d.png", i);
    const std::string fname = name;
    raster::write_png(sample.sat, out_dir / "sat" / fname);
    raster::write_png(sample.map, out_dir / "map" / fname);
    raster::write_png(raster::mask_to_image(sample.mask), out_dir / "mask" / fname);
    raster::write_png(raster::join_pair(sample.sat, sample.map),
                      out_dir / "pairs" / fname);
    raster::write_png(raster::resize_bilinear(sample.sat, ab_px, ab_px),
                      out_dir / "A" / fname);
    raster::write_png(raster::resize_bilinear(sample.map, ab_px, ab_px),
                      out_dir / "B" / fname);

    ManifestRecord rec;
    std::snprintf(name, sizeof name, "synth-%06d", i);
    rec.id = name;
    rec.sat_path = "sat/" + fname;
    rec.map_path = "map/" + fname;
    rec.mask_path = "mask/" + fname;
    rec.pair_path = "pairs/" + fname;
    rec.split = i < n_train ? "train" : "val";
    rec.palette = palette_name;
    manifest.records.push_back(std::move(rec));
  }
  save_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

} // namespace rwgan::synthworld
