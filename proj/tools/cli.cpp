#include "cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "chopnet/curation.hpp"
#include "chopnet/curation_server.hpp"
#include "chopnet/dataset.hpp"
#include "chopnet/error.hpp"
#include "chopnet/image.hpp"
#include "chopnet/mosaic.hpp"
#include "chopnet/network.hpp"
#include "chopnet/tile_engine.hpp"
#include "chopnet/trainer.hpp"

namespace chopnet::cli {

namespace {

namespace fs = std::filesystem;

struct ChopArgs {
  std::string image;
  std::string out_dir;
  int tile_size = 56;
  double overlap = 0.5;
  bool plan_only = false;
};

struct BuildArgs {
  std::vector<std::string> sources;
  std::string dataset_dir;
  std::string reject_list;
  double val_fraction = 0.25;
  std::uint64_t seed = 0;
  int tile_size = 56;
  double overlap = 0.5;
  std::string classes = "POL,TRA,HYP,NOM";
};

struct TrainArgs {
  std::string dataset_dir;
  std::string config;
  std::string out_dir;
  std::optional<std::string> overrides[12];
};

struct ClassifyArgs {
  std::string checkpoint;
  std::string image;
  std::string out_overlay;
  std::string out_predictions;
  double min_confidence = 0.0;
  int tile_size = 56;
  double overlap = 0.5;
  std::optional<int> radius;
  std::string dataset_dir;
  std::vector<double> channel_means;
};

struct EvaluateArgs {
  std::string predictions;
  std::string regions;
  int samples = 100;
  std::uint64_t seed = 0;
  std::string out_report;
};

struct ServeArgs {
  std::string dataset_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string ui_dir;
};

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadPredictions, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

int do_chop(const ChopArgs& a, std::ostream& out, std::ostream& err) {
  const ImageBuffer image = load_image(a.image);
  const TileGrid grid = plan_grid(image.width(), image.height(), a.tile_size, a.overlap);
  if (!a.plan_only) {
    if (a.out_dir.empty()) throw Error(ErrorCode::Io, "--out-dir is required unless --plan-only is given");
    fs::create_directories(a.out_dir);
    const std::string stem = fs::path(a.image).stem().string();
    for (const Tile& t : chop(image, grid)) {
      save_png(t.pixels, fs::path(a.out_dir) / (make_tile_id(stem, t.index.row, t.index.col) + ".png"));
    }
    err << "wrote " << grid.tile_count() << " tiles to " << a.out_dir << "\n";
  }
  out << grid.cols << " x " << grid.rows << " = " << grid.tile_count() << " tiles\n";
  return kSuccess;
}

int do_build(const BuildArgs& a, std::ostream& err) {
  const auto names = split_csv(a.classes);
  std::vector<ClassLabel> classes = make_classes(names);
  std::vector<SourceImage> sources;
  for (const auto& spec : a.sources) {
    const auto colon = spec.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size()) {
      throw Error(ErrorCode::UnknownLabel, "source '" + spec + "' must be IMAGE:LABEL");
    }
    const std::string label_text = spec.substr(colon + 1);
    const auto label = resolve_label(classes, label_text);
    if (!label) throw Error(ErrorCode::UnknownLabel, "label '" + label_text + "' is not one of " + a.classes);
    sources.push_back({spec.substr(0, colon), *label});
  }

  const TileStore store(a.dataset_dir);
  DatasetManifest manifest = build_manifest(sources, classes, a.tile_size, a.overlap, store);
  err << "chopped " << sources.size() << " source(s) into " << manifest.records.size() << " tiles\n";
  if (!a.reject_list.empty()) {
    RejectOutcome r = apply_reject_list(std::move(manifest), read_reject_list(a.reject_list));
    err << "rejected " << r.rejected << " tiles";
    if (!r.unknown_ids.empty()) err << " (" << r.unknown_ids.size() << " unknown ids ignored)";
    err << "\n";
    manifest = std::move(r.manifest);
  }
  manifest = split(std::move(manifest), a.val_fraction, a.seed);
  manifest.channel_means = compute_channel_means(manifest, store);
  write_manifest(manifest, store.manifest_path());
  err << "train " << manifest.count(Split::Train) << ", val " << manifest.count(Split::Val) << ", channel means ("
      << manifest.channel_means[0] << ", " << manifest.channel_means[1] << ", " << manifest.channel_means[2] << ")\n"
      << "manifest written to " << store.manifest_path().string() << "\n";
  return kSuccess;
}

int do_train(const TrainArgs& a, std::ostream& err) {
  TrainingConfig config;
  if (!a.config.empty()) config = read_config(a.config);
  const auto keys = config_keys();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (a.overrides[i]) set_config_value(config, keys[i], *a.overrides[i]);
  }
  config.validate();

  const TileStore store(a.dataset_dir);
  const DatasetManifest manifest = read_manifest(store.manifest_path());
  Architecture arch;
  arch.input_size = manifest.tile_size;
  arch.input_channels = 3;
  arch.num_classes = static_cast<int>(manifest.classes.size());

  fs::create_directories(a.out_dir);
  write_text(fs::path(a.out_dir) / "config.txt", format_config(config));

  TrainOptions options;
  options.snapshot_dir = fs::path(a.out_dir);
  options.on_epoch = [&err, &config](const EpochMetrics& m) {
    err << "epoch " << m.epoch << "/" << config.epochs << "  lr " << m.lr << "  train_loss " << m.train_loss;
    if (m.val_loss) err << "  val_loss " << *m.val_loss << "  val_acc " << *m.val_accuracy;
    err << "\n";
  };
  const TrainResult result = train(manifest, store, config, arch, options);
  write_text(fs::path(a.out_dir) / "metrics.csv", format_metrics_csv(result.history));
  save_checkpoint(result.params, fs::path(a.out_dir) / "final.ckpt");
  err << result.updates << " parameter updates, " << result.snapshots.size() << " snapshots in " << a.out_dir << "\n";
  return kSuccess;
}

int do_classify(const ClassifyArgs& a, std::ostream& err) {
  std::array<double, 3> means{};
  if (!a.channel_means.empty()) {
    if (a.channel_means.size() != 3) throw Error(ErrorCode::InvalidConfig, "--channel-means needs three values");
    means = {a.channel_means[0], a.channel_means[1], a.channel_means[2]};
  } else if (!a.dataset_dir.empty()) {
    means = read_manifest(TileStore(a.dataset_dir).manifest_path()).channel_means;
  } else {
    throw Error(ErrorCode::InvalidConfig, "give --dataset-dir (training manifest) or --channel-means");
  }
  const NetworkParams<float> params = load_checkpoint(a.checkpoint);
  const ImageBuffer image = load_image(a.image);
  const PredictionMap pmap = classify_image(params, image, a.tile_size, a.overlap, means);
  const int radius = a.radius.value_or(a.tile_size / 4);
  const Overlay overlay =
      render_overlay(image, pmap, Palette::defaults(params.arch.num_classes), radius, a.min_confidence);
  save_png(overlay.image, a.out_overlay);
  write_text(a.out_predictions, predictions_to_json(pmap).dump(1) + "\n");
  err << "classified " << pmap.entries.size() << " tiles (" << pmap.grid.cols << " x " << pmap.grid.rows << "), drew "
      << overlay.circles << " markers\n";
  return kSuccess;
}

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const PredictionMap pmap = predictions_from_json(read_json(a.predictions));
  const auto regions = regions_from_json(read_json(a.regions), pmap.class_names);
  const RegionReport report = evaluate_regions(pmap, regions, a.samples, a.seed);
  const std::string text = report_to_json(report, pmap.class_names).dump(2) + "\n";
  if (a.out_report.empty()) {
    out << text;
  } else {
    write_text(a.out_report, text);
  }
  return kSuccess;
}

int do_serve(const ServeArgs& a, std::ostream& err) {
  CurationStore store(a.dataset_dir);
  std::optional<fs::path> ui;
  if (!a.ui_dir.empty()) ui = fs::path(a.ui_dir);
  CurationServer server(store, ui);
  const int port = server.bind(a.host, a.port);

  // Signals are taken synchronously by a dedicated thread; worker threads
  // inherit the blocked mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGUSR1);
  sigset_t previous;
  pthread_sigmask(SIG_BLOCK, &signals, &previous);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  err << "serving " << store.effective_manifest().records.size() << " tiles on http://" << a.host << ":" << port
      << "/\n"
      << std::flush;
  server.run();
  pthread_kill(waiter.native_handle(), SIGUSR1);
  waiter.join();
  pthread_sigmask(SIG_SETMASK, &previous, nullptr);
  err << "stopped; " << store.decision_count() << " tiles have curation decisions\n";
  return kSuccess;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"chopnet: chopped-picture tile classification pipeline"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  ChopArgs chop_args;
  auto* chop_cmd = app.add_subcommand("chop", "Cut one image into overlapping square tiles");
  chop_cmd->add_option("--image", chop_args.image, "Input PNG or JPEG")->required();
  chop_cmd->add_option("--out-dir", chop_args.out_dir, "Directory for tile PNGs");
  chop_cmd->add_option("--tile-size", chop_args.tile_size, "Tile side in pixels");
  chop_cmd->add_option("--overlap", chop_args.overlap, "Overlap fraction between neighbouring tiles");
  chop_cmd->add_flag("--plan-only", chop_args.plan_only, "Report the grid without writing tiles");

  BuildArgs build_args;
  auto* build_cmd = app.add_subcommand("build-dataset", "Chop labeled sources into a split tile dataset");
  build_cmd->add_option("--source", build_args.sources, "IMAGE:LABEL (repeatable)")->required();
  build_cmd->add_option("--dataset-dir", build_args.dataset_dir, "Output dataset directory")->required();
  build_cmd->add_option("--reject-list", build_args.reject_list, "Tile ids to exclude, one per line");
  build_cmd->add_option("--val-fraction", build_args.val_fraction, "Validation share per class");
  build_cmd->add_option("--seed", build_args.seed, "Split seed");
  build_cmd->add_option("--tile-size", build_args.tile_size, "Tile side in pixels");
  build_cmd->add_option("--overlap", build_args.overlap, "Overlap fraction");
  build_cmd->add_option("--classes", build_args.classes, "Comma-separated class names, id order");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the LeNet classifier on a dataset");
  train_cmd->add_option("--dataset-dir", train_args.dataset_dir, "Dataset directory")->required();
  train_cmd->add_option("--config", train_args.config, "key = value solver config file");
  train_cmd->add_option("--out-dir", train_args.out_dir, "Snapshots, metrics.csv and final.ckpt")->required();
  {
    const TrainingConfig defaults;
    const std::string text = format_config(defaults);
    const auto keys = config_keys();
    for (std::size_t i = 0; i < keys.size(); ++i) {
      std::string flag = "--" + std::string(keys[i]);
      std::replace(flag.begin(), flag.end(), '_', '-');
      const auto line_start = text.find(std::string(keys[i]) + " = ");
      const auto value_start = line_start + keys[i].size() + 3;
      std::string value = text.substr(value_start, text.find('\n', value_start) - value_start);
      if (value.size() >= 2 && value.front() == '"') value = value.substr(1, value.size() - 2);
      train_cmd->add_option(flag, train_args.overrides[i], "Override config key " + std::string(keys[i]))
          ->default_str(value);
    }
  }

  ClassifyArgs classify_args;
  auto* classify_cmd = app.add_subcommand("classify", "Classify every tile of an image and draw the overlay");
  classify_cmd->add_option("--checkpoint", classify_args.checkpoint, "Trained checkpoint")->required();
  classify_cmd->add_option("--image", classify_args.image, "Test image")->required();
  classify_cmd->add_option("--out-overlay", classify_args.out_overlay, "Overlay PNG")->required();
  classify_cmd->add_option("--out-predictions", classify_args.out_predictions, "Predictions JSON")->required();
  classify_cmd->add_option("--min-confidence", classify_args.min_confidence, "Draw markers at or above this confidence");
  classify_cmd->add_option("--tile-size", classify_args.tile_size, "Tile side; must match the checkpoint");
  classify_cmd->add_option("--overlap", classify_args.overlap, "Overlap fraction");
  classify_cmd->add_option("--radius", classify_args.radius, "Marker radius in pixels")->default_str("tile-size/4");
  classify_cmd->add_option("--dataset-dir", classify_args.dataset_dir, "Training dataset (for channel means)");
  classify_cmd->add_option("--channel-means", classify_args.channel_means, "R G B means instead of --dataset-dir")
      ->expected(3);

  EvaluateArgs evaluate_args;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Region-sampling accuracy over a prediction map");
  evaluate_cmd->add_option("--predictions", evaluate_args.predictions, "Predictions JSON")->required();
  evaluate_cmd->add_option("--regions", evaluate_args.regions, "Regions JSON")->required();
  evaluate_cmd->add_option("--samples", evaluate_args.samples, "Samples per region");
  evaluate_cmd->add_option("--seed", evaluate_args.seed, "Sampling seed");
  evaluate_cmd->add_option("--out-report", evaluate_args.out_report, "Report JSON (stdout if omitted)");

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Run the local curation service");
  serve_cmd->add_option("--dataset-dir", serve_args.dataset_dir, "Dataset directory")->required();
  serve_cmd->add_option("--port", serve_args.port, "TCP port");
  serve_cmd->add_option("--host", serve_args.host, "Bind address");
  serve_cmd->add_option("--ui-dir", serve_args.ui_dir, "Static UI bundle served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUserError;
  }

  try {
    if (*chop_cmd) return do_chop(chop_args, out, err);
    if (*build_cmd) return do_build(build_args, err);
    if (*train_cmd) return do_train(train_args, err);
    if (*classify_cmd) return do_classify(classify_args, err);
    if (*evaluate_cmd) return do_evaluate(evaluate_args, out);
    if (*serve_cmd) return do_serve(serve_args, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::NonFiniteLoss ? kInternalError : kUserError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kUserError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kUserError;
}

}  // namespace chopnet::cli
