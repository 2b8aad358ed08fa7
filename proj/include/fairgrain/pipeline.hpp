#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fairgrain/fairness.hpp"
#include "fairgrain/image.hpp"
#include "fairgrain/inference.hpp"
#include "fairgrain/training.hpp"

namespace fairgrain {

// ---------------------------------------------------------------------------
// Dataset manifest (CSV: path,target,<protected...>,split)

struct ManifestRow {
  std::string path;  // resolved relative to the manifest file
  std::string target;
  std::vector<std::string> protected_values;
  std::string split;  // train | val | test
};

struct DatasetManifest {
  std::vector<ManifestRow> rows;
  std::vector<std::string> protected_names;
  std::vector<std::string> class_vocabulary;  // sorted target values
  std::vector<std::vector<std::string>> protected_vocabularies;

  int label_index(const std::string& target) const;
  std::vector<int> split_indices(const std::string& split) const;
};

DatasetManifest load_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// Run configuration (flat key=value file, every key overridable by a flag)

struct RunConfig {
  std::string backbone = "staged";
  std::vector<int> stage_widths = {64, 128, 256, 512, 512};
  int convs_per_stage = 1;
  std::vector<int> expert_stages = {3, 4, 5};
  int descriptor_len = 512;
  int input_resolution = 448;
  double mask_threshold = 0.5;
  std::string pooling = "gmp";  // gmp | gap
  bool softmax_fusion = false;
  std::vector<double> channel_mean = {0.5, 0.5, 0.5};
  std::vector<double> channel_std = {0.5, 0.5, 0.5};
  double learning_rate = 0.002;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 16;
  int epochs = 30;
  int patience = 5;
  std::uint64_t seed = 7;
  bool pool_per_image = false;
  bool pool_includes_self = true;
  bool plain_baseline = false;
  std::string dob_std = "population";  // population | sample
  double heatmap_alpha = 0.5;
  std::string manifest;
  std::string output_dir = "runs/latest";
  std::string pretrained_checkpoint;

  static const std::vector<std::string>& keys();
  void set_key(const std::string& key, const std::string& value);
  std::string get_key(const std::string& key) const;
  static RunConfig parse(const std::string& text);
  static RunConfig load_file(const std::string& path);
  std::string serialize() const;  // canonical: fixed key order, shortest numbers

  ModelConfig model_config(int num_classes) const;
  TrainConfig train_config() const;
};

/// Output directory with the FAIRGRAIN_OUTPUT_ROOT override applied to
/// relative paths.
std::string resolve_output_dir(const RunConfig& cfg);

/// Training-visible view of one split: images + target labels only.
TrainingSet load_training_set(const DatasetManifest& manifest, const std::string& split,
                              const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(MultiExpertModel& model, const RunConfig& cfg,
                     const std::vector<std::string>& class_vocabulary,
                     const std::string& path);

struct LoadedCheckpoint {
  std::unique_ptr<MultiExpertModel> model;
  RunConfig config;
  std::vector<std::string> class_vocabulary;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Loads and checks the stored model shape against an expected config
/// (expert count, descriptor length, backbone widths).
LoadedCheckpoint load_checkpoint(const std::string& path, const RunConfig& expected);

// ---------------------------------------------------------------------------
// Heatmap export

/// Writes one overlay per expert map plus the overall map next to `stem`
/// (PPM). Returns the written paths.
std::vector<std::string> export_heatmaps(const Image& image,
                                         const std::vector<Plane>& expert_maps,
                                         const Plane& overall_map, const std::string& dir,
                                         const std::string& stem, double alpha);

// ---------------------------------------------------------------------------
// Synthetic shape-detection dataset (square vs. distractors on tinted
// backgrounds; tint plays the protected attribute)

struct SyntheticConfig {
  int train_count = 1400;
  int val_count = 200;
  int test_count = 400;
  int resolution = 96;
  std::uint64_t seed = 11;
  double warm_fraction_train = 0.7;  // tint imbalance in the training split
  double warm_fraction_eval = 0.5;
};

/// Writes images/, manifest.csv, and centers.csv (square centers of positive
/// samples, for localization checks) under `dir`.
void generate_synthetic_dataset(const std::string& dir, const SyntheticConfig& cfg);

// ---------------------------------------------------------------------------
// Prediction records

struct PredictionRow {
  std::string id;
  int true_label = 0;
  int predicted_label = 0;
  std::vector<std::string> protected_values;
  std::vector<double> scores;
};

void write_predictions_csv(const std::string& path,
                           const std::vector<std::string>& protected_names,
                           const std::vector<PredictionRow>& rows);

std::vector<fairness::EvalRecord> read_predictions_csv(
    const std::string& path, const std::vector<std::string>& protected_filter);

/// Fused inference over one manifest split.
std::vector<PredictionRow> evaluate_split(MultiExpertModel& model,
                                          const DatasetManifest& manifest,
                                          const std::string& split, const RunConfig& cfg);

// ---------------------------------------------------------------------------

/// Entry point behind the CLI binary: train | evaluate | metrics | visualize.
int run_cli(const std::vector<std::string>& args);

/// write-temp-then-rename
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace fairgrain
