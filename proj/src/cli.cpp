#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "fairgrain/pipeline.hpp"

namespace fs = std::filesystem;

namespace fairgrain {

namespace {

/// --config plus one override flag per RunConfig key.
struct ConfigCapture {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration file (key=value lines)");
    for (const auto& key : RunConfig::keys()) {
      cmd->add_option_function<std::string>(
          "--" + key,
          [this, key](const std::string& v) { overrides.emplace_back(key, v); },
          "override config key '" + key + "'");
    }
  }

  RunConfig resolve(RunConfig base = RunConfig()) const {
    RunConfig cfg = config_path.empty() ? std::move(base) : RunConfig::load_file(config_path);
    for (const auto& [k, v] : overrides) cfg.set_key(k, v);
    return cfg;
  }
};

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += "\n";
  }
  return out;
}

int cmd_train(const ConfigCapture& capture) {
  RunConfig cfg = capture.resolve();
  if (cfg.manifest.empty())
    throw ConfigError("train: config key 'manifest' is required");
  auto manifest = load_manifest(cfg.manifest);
  const int num_classes = static_cast<int>(manifest.class_vocabulary.size());
  if (num_classes < 2)
    throw ValidationError("train: manifest holds fewer than 2 target classes");

  const std::string outdir = resolve_output_dir(cfg);
  fs::create_directories(outdir);
  atomic_write_file((fs::path(outdir) / "resolved_config.txt").string(), cfg.serialize());

  TrainingSet train = load_training_set(manifest, "train", cfg);
  TrainingSet val = load_training_set(manifest, "val", cfg);

  MultiExpertModel model(cfg.model_config(num_classes));
  Rng rng(cfg.seed);
  model.init_params(rng);
  if (!cfg.pretrained_checkpoint.empty()) {
    auto pretrained = load_checkpoint(cfg.pretrained_checkpoint, cfg);
    model.restore(pretrained.model->snapshot());
  }

  Trainer trainer(model, cfg.train_config());
  TrainLog log = trainer.fit(train, val);

  atomic_write_file((fs::path(outdir) / "training_log.txt").string(),
                    join_lines(log.to_lines()));
  const std::string ckpt = (fs::path(outdir) / "checkpoint.bin").string();
  save_checkpoint(model, cfg, manifest.class_vocabulary, ckpt);

  for (const auto& line : log.to_lines()) std::cout << line << "\n";
  std::cout << "checkpoint: " << ckpt << "\n";
  return 0;
}

int cmd_evaluate(const ConfigCapture& capture, const std::string& checkpoint_path,
                 const std::string& split, std::string out_path) {
  RunConfig cfg = capture.resolve(load_checkpoint(checkpoint_path).config);
  auto loaded = load_checkpoint(checkpoint_path, cfg);
  if (cfg.manifest.empty())
    throw ConfigError("evaluate: config key 'manifest' is required");
  auto manifest = load_manifest(cfg.manifest);
  if (manifest.class_vocabulary != loaded.class_vocabulary)
    throw IncompatibilityError(
        "manifest target vocabulary does not match the checkpoint's");

  auto rows = evaluate_split(*loaded.model, manifest, split, cfg);

  const std::string outdir = resolve_output_dir(cfg);
  fs::create_directories(outdir);
  if (out_path.empty())
    out_path = (fs::path(outdir) / ("predictions_" + split + ".csv")).string();
  else
    fs::create_directories(fs::path(out_path).parent_path().empty()
                               ? "."
                               : fs::path(out_path).parent_path().string());
  write_predictions_csv(out_path, manifest.protected_names, rows);
  atomic_write_file((fs::path(out_path).parent_path() / "resolved_config.txt").string(),
                    cfg.serialize());
  std::cout << "wrote " << out_path << " (" << rows.size() << " rows)\n";
  return 0;
}

int cmd_metrics(const ConfigCapture& capture, const std::string& predictions_path,
                const std::vector<std::string>& protected_filter, int positive_class,
                std::string out_path) {
  RunConfig cfg = capture.resolve();
  auto records = read_predictions_csv(predictions_path, protected_filter);
  if (cfg.dob_std != "sample" && cfg.dob_std != "population")
    throw ConfigError("metrics: dob_std must be 'population' or 'sample'");
  const auto mode = cfg.dob_std == "sample" ? fairness::StdMode::Sample
                                            : fairness::StdMode::Population;
  auto report = fairness::build_report(records, positive_class, mode);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";

  if (out_path.empty())
    out_path = (fs::path(predictions_path).parent_path() / "report.json").string();
  atomic_write_file(out_path, fairness::report_to_json(report));
  const std::string csv_path =
      (fs::path(out_path).parent_path() / (fs::path(out_path).stem().string() + ".csv"))
          .string();
  atomic_write_file(csv_path, fairness::report_to_csv(report));
  atomic_write_file((fs::path(out_path).parent_path() / "resolved_config.txt").string(),
                    cfg.serialize());

  char summary[256];
  std::snprintf(summary, sizeof(summary),
                "overall_accuracy=%.2f dob=%.3f max_min_ratio=%.3f deo=%.2f deodds=%.2f",
                report.overall_accuracy, report.dob, report.max_min_ratio, report.deo,
                report.deodds);
  std::cout << summary << "\n";
  std::cout << "wrote " << out_path << " and " << csv_path << "\n";
  return 0;
}

int cmd_visualize(const ConfigCapture& capture, const std::string& checkpoint_path,
                  const std::string& image_path, std::string out_dir) {
  RunConfig cfg = capture.resolve(load_checkpoint(checkpoint_path).config);
  auto loaded = load_checkpoint(checkpoint_path, cfg);
  MultiExpertModel& model = *loaded.model;

  Image img = read_ppm(image_path);
  const int res = cfg.input_resolution;
  if (img.h != res || img.w != res) img = resize_image(img, res, res);

  Tensor x(1, res, res, 3);
  for (int y = 0; y < res; ++y)
    for (int xx = 0; xx < res; ++xx)
      for (int ch = 0; ch < 3; ++ch) {
        const double v = img.c == 3 ? img.at(y, xx, ch) : img.at(y, xx, 0);
        x.at(0, y, xx, ch) = (v - cfg.channel_mean[ch]) / cfg.channel_std[ch];
      }

  auto fwd = model.forward_all(x, nn::Mode::Eval);
  auto regions = model.generate_regions(x, fwd);
  std::vector<Plane> expert_maps;
  for (int e = 0; e < model.experts(); ++e)
    expert_maps.push_back(regions.maps[e][0].normalized);

  if (out_dir.empty()) out_dir = (fs::path(resolve_output_dir(cfg)) / "heatmaps").string();
  const std::string stem = fs::path(image_path).stem().string();
  auto written = export_heatmaps(img, expert_maps, regions.overall_maps[0], out_dir, stem,
                                 cfg.heatmap_alpha);
  atomic_write_file((fs::path(out_dir) / "resolved_config.txt").string(), cfg.serialize());
  for (const auto& p : written) std::cout << "wrote " << p << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"multi-expert fine-grained attribute classifier with subgroup fairness reports"};
  app.name("fairgrain");
  app.require_subcommand(1);

  ConfigCapture train_cfg, eval_cfg, viz_cfg;

  auto* train = app.add_subcommand("train", "train a model from a dataset manifest");
  train_cfg.attach(train);

  auto* evaluate = app.add_subcommand("evaluate", "run fused inference over a split");
  std::string eval_checkpoint, eval_split = "test", eval_out;
  evaluate->add_option("--checkpoint", eval_checkpoint, "trained checkpoint")->required();
  evaluate->add_option("--split", eval_split, "manifest split to evaluate");
  evaluate->add_option("--out", eval_out, "predictions CSV path");
  eval_cfg.attach(evaluate);

  auto* metrics = app.add_subcommand("metrics", "fairness report from a predictions CSV");
  ConfigCapture metrics_cfg;
  std::string metrics_predictions, metrics_out;
  std::vector<std::string> metrics_protected;
  int metrics_positive = 1;
  metrics->add_option("--predictions", metrics_predictions, "predictions CSV")->required();
  metrics->add_option("--protected", metrics_protected,
                      "protected columns forming the subgroup key (default: all)");
  metrics->add_option("--positive-class", metrics_positive, "positive class index");
  metrics->add_option("--out", metrics_out, "report JSON path");
  metrics_cfg.attach(metrics);

  auto* visualize = app.add_subcommand("visualize", "export attention heatmap overlays");
  std::string viz_checkpoint, viz_image, viz_out_dir;
  visualize->add_option("--checkpoint", viz_checkpoint, "trained checkpoint")->required();
  visualize->add_option("--image", viz_image, "input image (PPM)")->required();
  visualize->add_option("--out-dir", viz_out_dir, "output directory");
  viz_cfg.attach(visualize);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (train->parsed()) return cmd_train(train_cfg);
    if (evaluate->parsed()) return cmd_evaluate(eval_cfg, eval_checkpoint, eval_split, eval_out);
    if (metrics->parsed())
      return cmd_metrics(metrics_cfg, metrics_predictions, metrics_protected,
                         metrics_positive, metrics_out);
    if (visualize->parsed()) return cmd_visualize(viz_cfg, viz_checkpoint, viz_image, viz_out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace fairgrain
