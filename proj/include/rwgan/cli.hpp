#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rwgan/errors.hpp"
#include "rwgan/geo.hpp"
#include "rwgan/manifest.hpp"
#include "rwgan/png_io.hpp"
#include "rwgan/raster.hpp"
#include "rwgan/synthworld.hpp"
#include "rwgan/tileclient.hpp"
#include "rwgan/train.hpp"

// Command implementations behind the CLI binary. Each command returns the
// JSON report it printed so tests can call commands in-process.

namespace rwgan::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// build-dataset

struct BuildDatasetArgs {
  std::string source = "synthetic"; // synthetic | fetch
  fs::path out_dir;
  int n = 20;
  uint64_t seed = 0;
  double split = 0.8;
  std::string palette = "standard"; // standard | redblack | urban
  // synthetic source
  int size = 256;
  std::string layout = "single";
  bool label_clutter = false;
  // fetch source
  fs::path db_path;
  std::string db_format = "auto"; // auto | partow_colon | simple_csv
  int limit = 0;                  // 0 = every record
  int zoom = 18;
  int image_px = 1200;
  fs::path cache_dir;
  std::string provider_base;
  double rate_limit = 1.0;
  bool offline = false;
};

namespace detail {

inline geo::DbFormat sniff_db_format(const fs::path& path,
                                     const std::string& requested) {
  if (requested == "partow_colon") return geo::DbFormat::partow_colon;
  if (requested == "simple_csv") return geo::DbFormat::simple_csv;
  if (requested != "auto")
    throw ConfigError("unknown database format '" + requested + "'");
  std::ifstream in(path);
  if (!in) throw IoError("cannot read airport database " + path.string());
  std::string line;
  while (std::getline(in, line) && line.empty()) {
  }
  const auto colons = std::count(line.begin(), line.end(), ':');
  const auto commas = std::count(line.begin(), line.end(), ',');
  return colons > commas ? geo::DbFormat::partow_colon
                         : geo::DbFormat::simple_csv;
}

inline raster::Palette dataset_palette(const std::string& name) {
  raster::Palette p = raster::palette_by_name(name);
  p.validate();
  return p;
}

} // namespace detail

inline nlohmann::json cmd_build_dataset(const BuildDatasetArgs& args) {
  if (args.out_dir.empty()) throw ConfigError("build-dataset: --out is required");
  nlohmann::json report;

  if (args.source == "synthetic") {
    synthworld::SceneSpec spec;
    spec.size_px = args.size;
    spec.layout = synthworld::layout_from_str(args.layout);
    spec.palette = detail::dataset_palette(
        args.palette == "standard" && spec.layout == synthworld::Layout::urban
            ? "urban"
            : args.palette);
    spec.label_clutter = args.label_clutter;
    DatasetManifest manifest = synthworld::generate_dataset(
        args.n, args.seed, spec, args.out_dir, args.split, args.palette);
    size_t train_n = 0;
    for (const auto& r : manifest.records) train_n += r.split == "train";
    report = {{"source", "synthetic"},
              {"samples", manifest.records.size()},
              {"train", train_n},
              {"val", manifest.records.size() - train_n},
              {"manifest", (args.out_dir / "manifest.jsonl").string()}};
    return report;
  }

  if (args.source != "fetch")
    throw ConfigError("build-dataset: source must be 'synthetic' or 'fetch'");

  // fetch pipeline: acquire size_px tiles, rescale to 600, join as
  // 600x1200 pairs, reduce to 256 for the unpaired A/B folders
  std::ifstream db(args.db_path);
  if (!db)
    throw IoError("build-dataset: cannot read airport database " +
                  args.db_path.string());
  auto parsed =
      geo::parse_airport_db(db, detail::sniff_db_format(args.db_path, args.db_format));
  std::vector<geo::AirportRecord> airports = std::move(parsed.records);
  if (args.limit > 0) {
    Rng rng(args.seed);
    rng.shuffle(airports);
    if (size_t(args.limit) < airports.size()) airports.resize(size_t(args.limit));
  }

  tileclient::ClientConfig ccfg{args.provider_base, args.rate_limit, args.offline};
  tileclient::TileClient client(ccfg);
  const geo::ZoomSpec zspec{args.zoom, args.image_px};
  const fs::path cache =
      args.cache_dir.empty() ? args.out_dir / "cache" : args.cache_dir;

  std::error_code ec;
  for (const char* sub : {"sat", "map", "pairs", "A", "B"})
    fs::create_directories(args.out_dir / sub, ec);
  if (ec) throw IoError("build-dataset: cannot create output directories");

  const raster::PaletteMap recolor_map =
      args.palette == "redblack"
          ? raster::palette_map_between(raster::standard_palette(),
                                        raster::redblack_palette())
          : raster::PaletteMap{};

  DatasetManifest manifest;
  manifest.base_dir = args.out_dir;
  const int n_train = int(std::llround(double(airports.size()) * args.split));
  int idx = 0;
  for (const auto& airport : airports) {
    auto req_sat = tileclient::build_tile_request(
        airport, zspec, tileclient::Style::satellite, ccfg);
    auto req_map = tileclient::build_tile_request(
        airport, zspec, tileclient::Style::roadmap, ccfg);
    auto fetched = client.fetch_pair(req_sat, req_map, cache);

    raster::RasterImage sat = raster::resize_bilinear(fetched.sat, 600, 600);
    raster::RasterImage map = raster::resize_bilinear(fetched.map, 600, 600);
    if (args.palette == "redblack")
      map = raster::remap_palette(map, recolor_map, /*snap=*/true);

    char name[32];
    std::snprintf(name, sizeof name, "%06d.png", idx);
    const std::string fname = name;
    raster::write_png(sat, args.out_dir / "sat" / fname);
    raster::write_png(map, args.out_dir / "map" / fname);
    raster::write_png(raster::join_pair(sat, map), args.out_dir / "pairs" / fname);
    raster::write_png(raster::resize_bilinear(sat, 256, 256),
                      args.out_dir / "A" / fname);
    raster::write_png(raster::resize_bilinear(map, 256, 256),
                      args.out_dir / "B" / fname);

    ManifestRecord rec;
    rec.id = airport.icao;
    rec.lat = airport.location.lat;
    rec.lon = airport.location.lon;
    rec.sat_path = "sat/" + fname;
    rec.map_path = "map/" + fname;
    rec.pair_path = "pairs/" + fname;
    rec.split = idx < n_train ? "train" : "val";
    rec.palette = args.palette;
    manifest.records.push_back(std::move(rec));
    ++idx;
  }
  save_manifest(manifest, args.out_dir / "manifest.jsonl");

  report = {{"source", "fetch"},
            {"samples", manifest.records.size()},
            {"train", size_t(n_train)},
            {"val", manifest.records.size() - size_t(n_train)},
            {"skipped_db_lines", parsed.skipped},
            {"manifest", (args.out_dir / "manifest.jsonl").string()}};
  return report;
}

// ---------------------------------------------------------------------------
// recolor

struct RecolorArgs {
  std::string map_spec; // "standard:redblack" or empty when map_file given
  fs::path map_file;    // JSON PaletteMap
  fs::path input;
  fs::path output;
  bool snap = false;
};

inline raster::PaletteMap resolve_palette_map(const RecolorArgs& args) {
  if (!args.map_file.empty()) {
    std::ifstream in(args.map_file);
    if (!in) throw IoError("recolor: cannot read " + args.map_file.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("recolor: bad palette map JSON: ") + e.what());
    }
    return raster::palette_map_from_json(j);
  }
  const auto colon = args.map_spec.find(':');
  if (colon == std::string::npos)
    throw ConfigError("recolor: --map expects '<from>:<to>' palette names");
  return raster::palette_map_between(
      raster::palette_by_name(args.map_spec.substr(0, colon)),
      raster::palette_by_name(args.map_spec.substr(colon + 1)));
}

inline nlohmann::json cmd_recolor(const RecolorArgs& args) {
  const raster::PaletteMap map = resolve_palette_map(args);
  raster::RasterImage img = raster::read_png(args.input);
  raster::write_png(raster::remap_palette(img, map, args.snap), args.output);
  return {{"input", args.input.string()},
          {"output", args.output.string()},
          {"entries", map.entries.size()},
          {"snap", args.snap}};
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  train::TrainConfig cfg;
  fs::path manifest;
  fs::path out_dir;
  std::optional<fs::path> resume;
};

inline nlohmann::json cmd_train(const TrainArgs& args) {
  DatasetManifest data = load_manifest(args.manifest);
  train::TrainResult result =
      train::train_loop(args.cfg, data, args.out_dir, args.resume);
  nlohmann::json final_losses;
  if (!result.history.steps.empty())
    final_losses = result.history.steps.back().losses;
  return {{"final_checkpoint", result.final_checkpoint.string()},
          {"steps", result.history.steps.size()},
          {"epochs", args.cfg.epochs},
          {"final_losses", final_losses},
          {"history", (args.out_dir / "history.jsonl").string()}};
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
  fs::path checkpoint;
  std::string direction = "sat2map"; // sat2map | map2sat | sketch2sat
  fs::path input;
  fs::path output;
};

namespace detail {

inline const nets::Network& generator_for_direction(const train::TrainState& st,
                                                    const std::string& direction) {
  const bool want_map2sat = direction == "map2sat" || direction == "sketch2sat";
  if (st.cfg.mode == train::Mode::pix2pix) {
    const bool have_map2sat = st.cfg.direction == train::Direction::map2sat;
    if (want_map2sat != have_map2sat)
      throw ConfigError("infer: checkpoint was trained for direction '" +
                        train::direction_str(st.cfg.direction) +
                        "', cannot serve '" + direction + "'");
    return st.net("G");
  }
  return want_map2sat ? st.net("G_ba") : st.net("G_ab");
}

} // namespace detail

inline nlohmann::json cmd_infer(const InferArgs& args) {
  if (args.direction != "sat2map" && args.direction != "map2sat" &&
      args.direction != "sketch2sat")
    throw ConfigError("infer: direction must be sat2map, map2sat or sketch2sat");
  train::TrainState st = train::load_checkpoint(args.checkpoint);
  const nets::Network& G = detail::generator_for_direction(st, args.direction);

  raster::RasterImage img = raster::read_png(args.input);
  img = raster::resize_bilinear(img, int(G.meta.image_size),
                                int(G.meta.image_size));
  bool snapped = false;
  if (args.direction == "sketch2sat") {
    // coerce the hand sketch onto the training map palette before translating
    raster::Palette pal = raster::palette_by_name(st.palette);
    raster::PaletteMap identity;
    for (const auto& c : pal.classes) identity.entries.push_back({c.color, c.color});
    img = raster::remap_palette(img, identity, /*snap=*/true);
    snapped = true;
  }
  raster::RasterImage out = train::infer(G, img);
  raster::write_png(out, args.output);
  return {{"direction", args.direction},
          {"input", args.input.string()},
          {"output", args.output.string()},
          {"image_size", G.meta.image_size},
          {"palette_snapped", snapped}};
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string mode = "metrics"; // metrics | diff-maps
  // metrics
  std::vector<fs::path> checkpoints;
  std::vector<fs::path> manifests;
  std::string split = "val";
  double tol = 30.0;
  // diff-maps
  fs::path generated;
  fs::path published;
  std::string palette = "standard";
  double threshold = 0.5;
  fs::path diff_out;
};

namespace detail {

inline nlohmann::json evaluate_one(const fs::path& ckpt_path,
                                   const fs::path& manifest_path,
                                   const std::string& split, double tol) {
  train::TrainState st = train::load_checkpoint(ckpt_path);
  const nets::Network& G = generator_for_direction(st, "sat2map");
  DatasetManifest data = load_manifest(manifest_path);
  auto records = data.split(split);
  if (records.empty())
    throw DataError("evaluate: split '" + split + "' is empty in " +
                    manifest_path.string());

  const int S = int(G.meta.image_size);
  nlohmann::json samples = nlohmann::json::array();
  double sum_l1 = 0, sum_iou = 0, sum_acc = 0;
  for (const auto* rec : records) {
    if (!rec->mask_path)
      throw DataError("evaluate: record '" + rec->id +
                      "' has no mask ground truth");
    raster::Palette pal = raster::palette_by_name(rec->palette);
    raster::RasterImage sat =
        raster::resize_bilinear(raster::read_png(data.resolve(rec->sat_path)), S, S);
    raster::RasterImage target =
        raster::resize_bilinear(raster::read_png(data.resolve(rec->map_path)), S, S);
    raster::Mask truth = raster::image_to_mask(raster::resize_bilinear(
        raster::read_png(data.resolve(*rec->mask_path)), S, S));

    raster::RasterImage out = train::infer(G, sat);

    // mean absolute error in [-1,1] units
    Tensor t_out = raster::to_unit(out);
    Tensor t_target = raster::to_unit(target);
    double l1 = 0;
    for (size_t i = 0; i < t_out.values().size(); ++i)
      l1 += std::fabs(double(t_out.values()[i]) - double(t_target.values()[i]));
    l1 /= double(t_out.values().size());

    const raster::Mask pred = raster::binarize_runway(out, pal, tol);
    const double iou = raster::compare_masks(truth, pred).iou;

    size_t agree = 0;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        agree += pal.nearest_class(out.at(x, y)) ==
                 pal.nearest_class(target.at(x, y));
    const double acc = double(agree) / double(size_t(S) * size_t(S));

    sum_l1 += l1;
    sum_iou += iou;
    sum_acc += acc;
    samples.push_back({{"id", rec->id},
                       {"l1_unit", l1},
                       {"runway_iou", iou},
                       {"pixel_accuracy", acc}});
  }
  const double n = double(records.size());
  return {{"checkpoint", ckpt_path.string()},
          {"manifest", manifest_path.string()},
          {"split", split},
          {"samples", samples},
          {"aggregate",
           {{"mean_l1_unit", sum_l1 / n},
            {"mean_runway_iou", sum_iou / n},
            {"mean_pixel_accuracy", sum_acc / n},
            {"count", records.size()}}}};
}

} // namespace detail

inline nlohmann::json cmd_evaluate(const EvaluateArgs& args) {
  if (args.mode == "metrics") {
    if (args.checkpoints.empty() || args.manifests.size() != args.checkpoints.size())
      throw ConfigError(
          "evaluate: metrics mode needs matching --checkpoint/--manifest lists");
    nlohmann::json reports = nlohmann::json::array();
    for (size_t i = 0; i < args.checkpoints.size(); ++i)
      reports.push_back(detail::evaluate_one(args.checkpoints[i],
                                             args.manifests[i], args.split,
                                             args.tol));
    return {{"mode", "metrics"}, {"reports", reports}};
  }
  if (args.mode != "diff-maps")
    throw ConfigError("evaluate: mode must be 'metrics' or 'diff-maps'");

  raster::Palette pal = raster::palette_by_name(args.palette);
  raster::RasterImage generated = raster::read_png(args.generated);
  raster::RasterImage published = raster::read_png(args.published);
  if (published.width != generated.width || published.height != generated.height)
    published =
        raster::resize_bilinear(published, generated.width, generated.height);

  // the generated map is the ground-truth proxy: `removed` marks runway area
  // the published map lost
  const raster::Mask gen_mask = raster::binarize_runway(generated, pal, args.tol);
  const raster::Mask pub_mask = raster::binarize_runway(published, pal, args.tol);
  raster::MaskDiff diff = raster::compare_masks(gen_mask, pub_mask);
  if (!args.diff_out.empty()) raster::write_png(diff.diff_image, args.diff_out);

  return {{"mode", "diff-maps"},
          {"iou", diff.iou},
          {"added_px", diff.added.count()},
          {"removed_px", diff.removed.count()},
          {"threshold", args.threshold},
          {"faulty", diff.iou < args.threshold},
          {"diff_image", args.diff_out.empty() ? nlohmann::json()
                                               : nlohmann::json(args.diff_out.string())}};
}

// ---------------------------------------------------------------------------
// plot-airports

struct PlotAirportsArgs {
  fs::path db_path;
  fs::path output;
  int width = 2048;
  int height = 1024;
  std::string format = "auto";
};

inline nlohmann::json cmd_plot_airports(const PlotAirportsArgs& args) {
  std::ifstream in(args.db_path);
  if (!in)
    throw IoError("plot-airports: cannot read " + args.db_path.string());
  auto parsed = geo::parse_airport_db(
      in, detail::sniff_db_format(args.db_path, args.format));
  raster::RasterImage img =
      geo::plot_airports(parsed.records, args.width, args.height);
  raster::write_png(img, args.output);
  return {{"airports", parsed.records.size()},
          {"skipped", parsed.skipped},
          {"output", args.output.string()}};
}

// ---------------------------------------------------------------------------
// config file support: a JSON object of long-option values merged in front of
// the explicit command line (explicit flags win)

inline std::vector<std::string> merge_config_args(
    const std::vector<std::string>& args) {
  fs::path config_path;
  std::vector<std::string> out;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      ++i;
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      out.push_back(args[i]);
    }
  }
  if (config_path.empty()) return out;

  std::ifstream in(config_path);
  if (!in) throw IoError("config: cannot read " + config_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: bad JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config: expected a JSON object");

  auto have_flag = [&](const std::string& name) {
    const std::string opt = "--" + name;
    for (const auto& a : out)
      if (a == opt || a.rfind(opt + "=", 0) == 0) return true;
    return false;
  };

  std::vector<std::string> merged;
  if (!out.empty()) merged.push_back(out[0]); // subcommand
  for (const auto& [key, value] : j.items()) {
    if (have_flag(key)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) merged.push_back("--" + key);
    } else if (value.is_string()) {
      merged.push_back("--" + key + "=" + value.get<std::string>());
    } else {
      merged.push_back("--" + key + "=" + value.dump());
    }
  }
  for (size_t i = 1; i < out.size(); ++i) merged.push_back(out[i]);
  return merged;
}

} // namespace rwgan::cli
