#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <queue>
#include <set>

#include "rwgan/synthworld.hpp"

using namespace rwgan;
using namespace rwgan::synthworld;

namespace {

// 4-connectivity flood fill component counter (test oracle)
int component_count(const raster::Mask& m) {
  std::vector<uint8_t> seen(m.bits.size(), 0);
  int components = 0;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.get(x, y) || seen[size_t(y) * m.width + x]) continue;
      ++components;
      std::queue<std::pair<int, int>> q;
      q.push({x, y});
      seen[size_t(y) * m.width + x] = 1;
      while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop();
        const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = cx + dx[k], ny = cy + dy[k];
          if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) continue;
          if (!m.get(nx, ny) || seen[size_t(ny) * m.width + nx]) continue;
          seen[size_t(ny) * m.width + nx] = 1;
          q.push({nx, ny});
        }
      }
    }
  return components;
}

raster::Mask erase_disc(const raster::Mask& m, double cx, double cy, double r) {
  raster::Mask out = m;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      const double px = (x + 0.5) / m.width, py = (y + 0.5) / m.height;
      if (std::hypot(px - cx, py - cy) <= r) out.set(x, y, false);
    }
  return out;
}

SceneSpec basic_spec(uint64_t seed, Layout layout, int size = 128) {
  SceneSpec spec;
  spec.seed = seed;
  spec.size_px = size;
  spec.layout = layout;
  spec.palette = raster::redblack_palette();
  return spec;
}

} // namespace

TEST_CASE("same spec renders byte-identical triples") {
  const SceneSpec spec = basic_spec(1234, Layout::cross);
  auto a = generate_scene(spec);
  auto b = generate_scene(spec);
  CHECK(a.sat == b.sat);
  CHECK(a.map == b.map);
  CHECK(a.mask == b.mask);
}

TEST_CASE("single layout produces one connected component") {
  for (uint64_t seed : {1u, 7u, 42u, 99u, 1000u}) {
    auto sample = generate_scene(basic_spec(seed, Layout::single));
    CHECK(component_count(sample.mask) == 1);
  }
}

TEST_CASE("five-way junction splits into five arms after erasing the hub") {
  for (uint64_t seed : {3u, 11u, 77u, 2024u}) {
    const SceneSpec spec = basic_spec(seed, Layout::five_way, 256);
    auto geo = scene_geometry(spec);
    REQUIRE(geo.arm_count == 5);
    auto sample = generate_scene(spec);
    CHECK(component_count(sample.mask) == 1); // arms meet at the junction
    auto cut = erase_disc(sample.mask, geo.junction_x, geo.junction_y,
                          2.5 * geo.max_half_w);
    CHECK(component_count(cut) == 5);
  }
}

TEST_CASE("three-way junction splits into three arms") {
  for (uint64_t seed : {5u, 21u, 300u}) {
    const SceneSpec spec = basic_spec(seed, Layout::three_way, 256);
    auto geo = scene_geometry(spec);
    auto sample = generate_scene(spec);
    auto cut = erase_disc(sample.mask, geo.junction_x, geo.junction_y,
                          2.5 * geo.max_half_w);
    CHECK(component_count(cut) == 3);
  }
}

TEST_CASE("mask matches the map's runway pixels for every layout") {
  for (Layout layout : {Layout::single, Layout::parallel, Layout::cross,
                        Layout::three_way, Layout::five_way, Layout::loop}) {
    auto sample = generate_scene(basic_spec(17, layout));
    auto derived = raster::binarize_runway(sample.map, sample.spec.palette, 30.0);
    const double iou = raster::compare_masks(sample.mask, derived).iou;
    INFO(layout_str(layout));
    CHECK(iou >= 0.99);
  }
}

TEST_CASE("flat standard-palette maps binarize exactly at low tolerance") {
  // the tan/grey classes sit ~12.2 RGB units apart, so tol must stay under
  // that distance; 10 works on flat renders
  SceneSpec spec = basic_spec(23, Layout::cross);
  spec.palette = raster::standard_palette();
  auto sample = generate_scene(spec);
  auto derived = raster::binarize_runway(sample.map, spec.palette, 10.0);
  CHECK(raster::compare_masks(sample.mask, derived).iou == 1.0);
}

TEST_CASE("runway coverage stays between 2 and 40 percent") {
  Rng rng(5);
  for (Layout layout : {Layout::single, Layout::parallel, Layout::cross,
                        Layout::three_way, Layout::five_way, Layout::loop}) {
    for (int i = 0; i < 5; ++i) {
      auto sample =
          generate_scene(basic_spec(rng.next_u64(), layout, 128));
      const double frac =
          double(sample.mask.count()) / double(128 * 128);
      INFO(layout_str(layout) << " sample " << i);
      CHECK(frac >= 0.02);
      CHECK(frac <= 0.40);
    }
  }
}

TEST_CASE("distinct seeds give distinct satellite renders") {
  std::set<std::vector<uint8_t>> digests;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto sample = generate_scene(basic_spec(seed, Layout::single, 64));
    digests.insert(sample.sat.pixels);
  }
  CHECK(digests.size() == 100);
}

TEST_CASE("urban scenes carry more map classes than single-class scenes") {
  SceneSpec urban = basic_spec(9, Layout::urban, 256);
  urban.palette = raster::urban_palette();
  auto urban_sample = generate_scene(urban);

  SceneSpec single = basic_spec(9, Layout::single, 256);
  single.palette = raster::standard_palette();
  auto single_sample = generate_scene(single);

  auto classes_used = [](const raster::RasterImage& map,
                         const raster::Palette& pal) {
    std::set<std::string> used;
    for (int y = 0; y < map.height; ++y)
      for (int x = 0; x < map.width; ++x) {
        const auto c = map.at(x, y);
        for (const auto& cls : pal.classes)
          if (cls.color == c && cls.name != "background") used.insert(cls.name);
      }
    return used;
  };
  const auto urban_classes = classes_used(urban_sample.map, urban.palette);
  const auto single_classes = classes_used(single_sample.map, single.palette);
  CHECK(urban_classes.size() > single_classes.size());
  CHECK(urban_classes.count("runway") == 1);
  CHECK(single_classes == std::set<std::string>{"runway"});
}

TEST_CASE("label clutter stays off the runway and only touches the map") {
  SceneSpec spec = basic_spec(31, Layout::cross, 256);
  spec.label_clutter = true;
  auto with = generate_scene(spec);
  SceneSpec plain = spec;
  plain.label_clutter = false;
  auto without = generate_scene(plain);

  CHECK(with.sat == without.sat);
  CHECK(with.map != without.map);
  // mask consistency survives clutter
  auto derived = raster::binarize_runway(with.map, spec.palette, 30.0);
  CHECK(raster::compare_masks(with.mask, derived).iou >= 0.99);
}

TEST_CASE("dropping an arm removes exactly that arm from map and mask") {
  const SceneSpec spec = basic_spec(55, Layout::five_way, 256);
  auto full = generate_scene(spec);
  auto faulty = generate_scene(spec, {0});
  CHECK(faulty.mask.count() < full.mask.count());
  auto diff = raster::compare_masks(full.mask, faulty.mask);
  CHECK(diff.removed.count() > 0);
  CHECK(diff.added.count() == 0);
  CHECK(diff.iou < 0.9);
}

TEST_CASE("scene spec validation") {
  SceneSpec bad;
  bad.size_px = 100;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  SceneSpec ok;
  ok.size_px = 600;
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("generate_dataset writes every layout and an accurate manifest") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "rwgan_dataset_test";
  fs::remove_all(dir);
  SceneSpec spec = basic_spec(0, Layout::single, 64);
  auto manifest = generate_dataset(10, 400, spec, dir, 0.8, "redblack");
  REQUIRE(manifest.records.size() == 10);
  size_t train = 0, val = 0;
  for (const auto& r : manifest.records) {
    train += r.split == "train";
    val += r.split == "val";
    CHECK(r.palette == "redblack");
  }
  CHECK(train == 8);
  CHECK(val == 2);

  // loads without path errors immediately after creation
  auto loaded = load_manifest(dir / "manifest.jsonl");
  CHECK(loaded.records.size() == 10);

  // pairs are twice as wide as sat images
  auto sat = raster::read_png(dir / "sat" / "000000.png");
  auto pair = raster::read_png(dir / "pairs" / "000000.png");
  CHECK(pair.width == 2 * sat.width);
  CHECK(pair.height == sat.height);

  // regenerating with the same base seed reproduces identical bytes
  const fs::path dir2 = fs::temp_directory_path() / "rwgan_dataset_test2";
  fs::remove_all(dir2);
  generate_dataset(10, 400, spec, dir2, 0.8, "redblack");
  auto bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  CHECK(bytes(dir / "sat" / "000003.png") == bytes(dir2 / "sat" / "000003.png"));
  CHECK(bytes(dir / "manifest.jsonl") == bytes(dir2 / "manifest.jsonl"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("dataset A/B folders cap at 256 px") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "rwgan_dataset_600";
  fs::remove_all(dir);
  SceneSpec spec = basic_spec(0, Layout::single, 600);
  generate_dataset(1, 7, spec, dir, 0.5, "redblack");
  auto a = raster::read_png(dir / "A" / "000000.png");
  CHECK(a.width == 256);
  auto pair = raster::read_png(dir / "pairs" / "000000.png");
  CHECK(pair.width == 1200);
  CHECK(pair.height == 600);
  fs::remove_all(dir);
}
