#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fairgrain/model.hpp"

namespace fairgrain {

struct TrainConfig {
  double learning_rate = 0.002;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double min_learning_rate = 0.0;
  int batch_size = 16;
  int epochs = 50;
  int patience = 5;  // early stopping on validation accuracy
  std::uint64_t seed = 0;
  bool pool_per_image = false;    // draw one augmentation source per image
  bool pool_includes_self = true; // pool {raw, A_1..A_N} vs excluding A_n
  bool plain_baseline = false;    // single-head training, no mutual steps
};

/// One record per training step of one batch.
struct StepRecord {
  int step_index = 0;          // 1-based within the iteration
  std::string component;       // "e3", "e2", ..., "joint", "concat"
  std::string input_source;    // "raw", "A_1", ..., "A_oval"
  double loss = 0.0;
};
using IterationTrace = std::vector<StepRecord>;

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  std::vector<std::pair<std::string, double>> mean_losses;  // per component
  double val_accuracy = 0.0;  // percent
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  bool stopped_early = false;

  std::vector<std::string> to_lines() const;
};

/// In-memory training-visible dataset: pixels and target labels only.
/// Protected attributes have no field here, so the training path cannot
/// read them.
struct TrainingSet {
  int height = 0, width = 0, channels = 0;
  std::vector<std::vector<std::uint8_t>> images;  // 8-bit interleaved pixels
  std::vector<int> labels;
  std::vector<double> channel_mean;  // per-channel normalization
  std::vector<double> channel_std;

  size_t size() const { return images.size(); }
  /// Normalized batch tensor for the given sample indices.
  Tensor make_batch(const std::vector<int>& indices) const;
};

/// Cosine-annealed learning rate for epoch e (0-based) of `total`.
double cosine_lr(double base_lr, double min_lr, int epoch, int total);

/// Runs the multi-step mutual learning schedule: per batch, the deepest
/// expert first (producing every attention region), then shallower experts
/// on pool-selected inputs, then all experts jointly on the overall region,
/// then the concatenated classifier on the raw input.
class Trainer {
 public:
  Trainer(MultiExpertModel& model, const TrainConfig& cfg);

  enum class StepKind { Deepest, Shallow, Joint, Concat };

  /// Loss (and, when requested, parameter gradients) for one step without
  /// applying the optimizer. `expert` is used by Shallow only.
  struct StepEval {
    double loss = 0.0;
    std::unique_ptr<MultiExpertModel::Forward> fwd;  // kept for the deepest step
  };
  StepEval step_loss(StepKind kind, int expert, const Tensor& input,
                     const std::vector<int>& targets, bool with_backward);

  struct DeepestResult {
    double loss = 0.0;
    MultiExpertModel::Regions regions;
  };
  /// Step 1: trains expert N on the raw batch and returns the detached
  /// attention regions generated from that forward pass (pre-update).
  DeepestResult train_step_deepest(const Tensor& batch, const std::vector<int>& targets);

  /// Uniform draw from {raw, A_1, ..., A_N}; one draw for the whole batch
  /// unless pool_per_image is set. `expert` identifies the step for the
  /// pool-exclusion variant.
  Tensor select_augmented_input(const Tensor& raw, const MultiExpertModel::Regions& regions,
                                int expert, std::string* source_name);

  double train_step_shallow(int n, const Tensor& input, const std::vector<int>& targets);
  double train_step_joint(const Tensor& overall_region, const std::vector<int>& targets);
  double train_step_concat(const Tensor& raw, const std::vector<int>& targets);

  /// Full N+2-step schedule on one batch (or the single plain step when
  /// configured as a baseline).
  IterationTrace run_iteration(const Tensor& raw, const std::vector<int>& targets);

  TrainLog fit(const TrainingSet& train, const TrainingSet& val);

  /// Percent of correctly classified samples under this trainer's
  /// evaluation rule (fused for mutual training, raw deepest-expert score
  /// for the plain baseline).
  double evaluate_accuracy(const TrainingSet& data);

  const IterationTrace& last_trace() const { return last_trace_; }
  const TrainConfig& config() const { return cfg_; }
  void set_learning_rate(double lr) { current_lr_ = lr; }

 private:
  void sgd_update();

  MultiExpertModel& model_;
  TrainConfig cfg_;
  std::vector<nn::ParamRef> trainable_;
  std::vector<double> velocity_;
  double current_lr_;
  Rng pool_rng_;
  Rng order_rng_;
  IterationTrace last_trace_;
};

}  // namespace fairgrain
