#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "rwgan/cli.hpp"

namespace {

// shared option plumbing for the train subcommand
struct TrainCliOpts {
  std::string mode = "pix2pix";
  std::string direction = "sat2map";
  std::string manifest;
  std::string out_dir;
  std::string resume;
  int64_t image_size = 0; // 0 = default
  int64_t epochs = 0;
  int64_t base_filters = 32;
  int64_t pool_size = 50;
  double lr = 0.0002;
  double beta1 = 0.5;
  double d_loss_weight = 0.5;
  double lambda_l1 = 100.0;
  double lambda_cycle = 10.0;
  double lambda_identity = 5.0;
  uint64_t seed = 0;
};

int run(std::vector<std::string> args) {
  CLI::App app{"Reversible satellite/runway-map translation toolkit"};
  app.require_subcommand(1);

  rwgan::cli::BuildDatasetArgs bd;
  std::string bd_out, bd_db, bd_cache;
  auto* build = app.add_subcommand("build-dataset",
                                   "Generate or fetch a paired dataset");
  build->add_option("--source", bd.source, "synthetic or fetch")
      ->check(CLI::IsMember({"synthetic", "fetch"}));
  build->add_option("--out", bd_out, "Output directory")->required();
  build->add_option("--n", bd.n, "Number of samples (synthetic)");
  build->add_option("--seed", bd.seed, "Base seed / selection seed");
  build->add_option("--split", bd.split, "Train fraction (0,1)");
  build->add_option("--palette", bd.palette, "standard, redblack or urban");
  build->add_option("--size", bd.size, "Scene size in px (synthetic)");
  build->add_option("--layout", bd.layout,
                    "single, parallel, cross, three_way, five_way, loop, urban");
  build->add_flag("--label-clutter", bd.label_clutter,
                  "Overlay glyph-like label clutter on maps");
  build->add_option("--db", bd_db, "Airport database file (fetch)");
  build->add_option("--db-format", bd.db_format, "auto, partow_colon or simple_csv");
  build->add_option("--limit", bd.limit, "Max airports to fetch (0 = all)");
  build->add_option("--zoom", bd.zoom, "Tile zoom level (fetch)");
  build->add_option("--image-px", bd.image_px, "Requested tile size (fetch)");
  build->add_option("--cache", bd_cache, "Tile cache directory");
  build->add_option("--provider-base", bd.provider_base,
                    "Static-map endpoint, may embed {lat} {lon} {zoom} {size} {style} {key}");
  build->add_option("--rate-limit", bd.rate_limit, "Requests per second");
  build->add_flag("--offline", bd.offline, "Refuse network access");

  rwgan::cli::RecolorArgs rc;
  std::string rc_map_file, rc_in, rc_out;
  auto* recolor = app.add_subcommand("recolor", "Remap a map image's palette");
  recolor->add_option("--map", rc.map_spec, "'<from>:<to>' palette names");
  recolor->add_option("--map-file", rc_map_file, "Palette map JSON file");
  recolor->add_option("input", rc_in, "Input PNG")->required();
  recolor->add_option("output", rc_out, "Output PNG")->required();
  recolor->add_flag("--snap", rc.snap, "Snap pixels to the nearest source color");

  TrainCliOpts tr;
  auto* train_cmd = app.add_subcommand("train", "Train a translation model");
  train_cmd->add_option("--mode", tr.mode, "pix2pix or cyclegan")
      ->check(CLI::IsMember({"pix2pix", "cyclegan"}));
  train_cmd->add_option("--direction", tr.direction, "sat2map or map2sat (pix2pix)")
      ->check(CLI::IsMember({"sat2map", "map2sat"}));
  train_cmd->add_option("--manifest", tr.manifest, "Dataset manifest")->required();
  train_cmd->add_option("--out", tr.out_dir, "Run output directory")->required();
  train_cmd->add_option("--resume", tr.resume, "Checkpoint to resume from");
  train_cmd->add_option("--image-size", tr.image_size, "Training resolution");
  train_cmd->add_option("--epochs", tr.epochs, "Epoch count (default 10 / 100)");
  train_cmd->add_option("--base-filters", tr.base_filters, "Width multiplier");
  train_cmd->add_option("--pool-size", tr.pool_size, "Image pool capacity");
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
  train_cmd->add_option("--beta1", tr.beta1, "Adam beta1");
  train_cmd->add_option("--d-loss-weight", tr.d_loss_weight,
                        "Discriminator objective weight");
  train_cmd->add_option("--lambda-l1", tr.lambda_l1, "Paired L1 weight");
  train_cmd->add_option("--lambda-cycle", tr.lambda_cycle, "Cycle loss weight");
  train_cmd->add_option("--lambda-identity", tr.lambda_identity,
                        "Identity loss weight");
  train_cmd->add_option("--seed", tr.seed, "Run seed");

  rwgan::cli::InferArgs inf;
  std::string inf_ckpt, inf_in, inf_out;
  auto* infer_cmd = app.add_subcommand("infer", "Run a trained generator");
  infer_cmd->add_option("--checkpoint", inf_ckpt, "Checkpoint file")->required();
  infer_cmd->add_option("--direction", inf.direction,
                        "sat2map, map2sat or sketch2sat");
  infer_cmd->add_option("input", inf_in, "Input PNG")->required();
  infer_cmd->add_option("output", inf_out, "Output PNG")->required();

  rwgan::cli::EvaluateArgs ev;
  std::vector<std::string> ev_ckpts, ev_manifests;
  std::string ev_gen, ev_pub, ev_diff;
  auto* eval_cmd = app.add_subcommand("evaluate", "Metrics or faulty-map diff");
  eval_cmd->add_option("--mode", ev.mode, "metrics or diff-maps")
      ->check(CLI::IsMember({"metrics", "diff-maps"}));
  eval_cmd->add_option("--checkpoint", ev_ckpts, "Checkpoint(s) for metrics");
  eval_cmd->add_option("--manifest", ev_manifests, "Manifest(s) for metrics");
  eval_cmd->add_option("--split", ev.split, "Manifest split to score");
  eval_cmd->add_option("--tol", ev.tol, "Binarization tolerance (RGB distance)");
  eval_cmd->add_option("--generated", ev_gen, "Generated map PNG (diff-maps)");
  eval_cmd->add_option("--published", ev_pub, "Published map PNG (diff-maps)");
  eval_cmd->add_option("--palette", ev.palette, "Palette for binarization");
  eval_cmd->add_option("--threshold", ev.threshold, "IoU threshold for faulty flag");
  eval_cmd->add_option("--diff-out", ev_diff, "Where to write the diff image");

  rwgan::cli::PlotAirportsArgs pa;
  std::string pa_db, pa_out;
  auto* plot = app.add_subcommand("plot-airports",
                                  "Scatter the airport database onto a map");
  plot->add_option("db", pa_db, "Airport database file")->required();
  plot->add_option("output", pa_out, "Output PNG")->required();
  plot->add_option("--width", pa.width, "Canvas width");
  plot->add_option("--height", pa.height, "Canvas height");
  plot->add_option("--format", pa.format, "auto, partow_colon or simple_csv");

  // CLI11 wants argv reversed
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2; // bad flags are config errors
  }

  nlohmann::json report;
  if (*build) {
    bd.out_dir = bd_out;
    bd.db_path = bd_db;
    bd.cache_dir = bd_cache;
    report = rwgan::cli::cmd_build_dataset(bd);
  } else if (*recolor) {
    rc.map_file = rc_map_file;
    rc.input = rc_in;
    rc.output = rc_out;
    report = rwgan::cli::cmd_recolor(rc);
  } else if (*train_cmd) {
    rwgan::cli::TrainArgs ta;
    ta.cfg = rwgan::train::default_config(rwgan::train::mode_from_str(tr.mode));
    ta.cfg.direction = rwgan::train::direction_from_str(tr.direction);
    if (tr.image_size > 0) ta.cfg.image_size = tr.image_size;
    if (tr.epochs > 0) ta.cfg.epochs = tr.epochs;
    ta.cfg.base_filters = tr.base_filters;
    ta.cfg.pool_size = tr.pool_size;
    ta.cfg.lr = tr.lr;
    ta.cfg.beta1 = tr.beta1;
    ta.cfg.d_loss_weight = tr.d_loss_weight;
    ta.cfg.lambda_l1 = tr.lambda_l1;
    ta.cfg.lambda_cycle = tr.lambda_cycle;
    ta.cfg.lambda_identity = tr.lambda_identity;
    ta.cfg.seed = tr.seed;
    ta.manifest = tr.manifest;
    ta.out_dir = tr.out_dir;
    if (!tr.resume.empty()) ta.resume = tr.resume;
    report = rwgan::cli::cmd_train(ta);
  } else if (*infer_cmd) {
    inf.checkpoint = inf_ckpt;
    inf.input = inf_in;
    inf.output = inf_out;
    report = rwgan::cli::cmd_infer(inf);
  } else if (*eval_cmd) {
    for (const auto& c : ev_ckpts) ev.checkpoints.emplace_back(c);
    for (const auto& m : ev_manifests) ev.manifests.emplace_back(m);
    ev.generated = ev_gen;
    ev.published = ev_pub;
    ev.diff_out = ev_diff;
    report = rwgan::cli::cmd_evaluate(ev);
  } else if (*plot) {
    pa.db_path = pa_db;
    pa.output = pa_out;
    report = rwgan::cli::cmd_plot_airports(pa);
  }

  std::cout << report.dump(2) << std::endl;
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = rwgan::cli::merge_config_args(args);
    return run(std::move(args));
  } catch (const rwgan::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
