#include "fairgrain/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fairgrain/inference.hpp"

namespace fairgrain {

namespace {
std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}
}  // namespace

Tensor TrainingSet::make_batch(const std::vector<int>& indices) const {
  if (static_cast<int>(channel_mean.size()) != channels ||
      static_cast<int>(channel_std.size()) != channels)
    throw ConfigError("training set: normalization statistics must match channel count");
  Tensor t(static_cast<int>(indices.size()), height, width, channels);
  const size_t per_image = static_cast<size_t>(height) * width * channels;
  for (size_t b = 0; b < indices.size(); ++b) {
    const auto& img = images[indices[b]];
    if (img.size() != per_image)
      throw ValidationError("training set: sample " + std::to_string(indices[b]) +
                            " has unexpected pixel count");
    double* dst = &t.data[b * per_image];
    for (size_t k = 0; k < per_image; ++k) {
      const int ch = static_cast<int>(k % channels);
      dst[k] = (img[k] / 255.0 - channel_mean[ch]) / channel_std[ch];
    }
  }
  return t;
}

double cosine_lr(double base_lr, double min_lr, int epoch, int total) {
  if (total <= 0) throw ConfigError("cosine_lr: epoch budget must be positive");
  const double t = static_cast<double>(epoch) / total;
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(M_PI * t));
}

std::vector<std::string> TrainLog::to_lines() const {
  std::vector<std::string> lines;
  for (const auto& e : epochs) {
    std::string line = "epoch=" + std::to_string(e.epoch) + " lr=" + fmt6(e.lr);
    for (const auto& [name, loss] : e.mean_losses) line += " loss_" + name + "=" + fmt6(loss);
    line += " val_acc=" + fmt6(e.val_accuracy);
    lines.push_back(std::move(line));
  }
  lines.push_back("best_epoch=" + std::to_string(best_epoch) +
                  " best_val_acc=" + fmt6(best_val_accuracy) +
                  " stopped_early=" + (stopped_early ? std::string("1") : std::string("0")));
  return lines;
}

Trainer::Trainer(MultiExpertModel& model, const TrainConfig& cfg)
    : model_(model),
      cfg_(cfg),
      current_lr_(cfg.learning_rate),
      pool_rng_(cfg.seed * 0x9e3779b97f4a7c15ULL + 1),
      order_rng_(cfg.seed * 0x9e3779b97f4a7c15ULL + 2) {
  if (cfg.learning_rate <= 0.0) throw ConfigError("train config: learning rate must be > 0");
  if (cfg.batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
  if (model.experts() < 1) throw ConfigError("train config: N must be >= 1");
  for (const auto& p : model_.params())
    if (p.grad != nullptr) trainable_.push_back(p);
  size_t total = 0;
  for (const auto& p : trainable_) total += p.count;
  velocity_.assign(total, 0.0);
}

Trainer::StepEval Trainer::step_loss(StepKind kind, int expert, const Tensor& input,
                                     const std::vector<int>& targets, bool with_backward) {
  const int N = model_.experts();
  StepEval out;
  switch (kind) {
    case StepKind::Deepest: {
      // Only expert N is trained here; shallower heads still run forward to
      // provide attention taps, with frozen normalization statistics.
      std::vector<nn::Mode> head_modes(N, nn::Mode::Eval);
      head_modes[N - 1] = nn::Mode::Train;
      auto fwd = std::make_unique<MultiExpertModel::Forward>(
          model_.forward_all(input, nn::Mode::Train, head_modes));
      RowMat d;
      out.loss = nn::cross_entropy(fwd->scores[N - 1], targets, with_backward ? &d : nullptr);
      if (with_backward) model_.backward_expert(N, d);
      out.fwd = std::move(fwd);
      break;
    }
    case StepKind::Shallow: {
      auto f = model_.forward_expert(input, expert, nn::Mode::Train);
      RowMat d;
      out.loss = nn::cross_entropy(f.scores, targets, with_backward ? &d : nullptr);
      if (with_backward) model_.backward_expert(expert, d);
      break;
    }
    case StepKind::Joint: {
      auto fwd = model_.forward_all(input, nn::Mode::Train);
      std::vector<RowMat> ds(N);
      RowMat dov;
      double total = 0.0;
      for (int e = 0; e < N; ++e)
        total += nn::cross_entropy(fwd.scores[e], targets, with_backward ? &ds[e] : nullptr);
      total += nn::cross_entropy(fwd.overall_scores, targets, with_backward ? &dov : nullptr);
      if (with_backward) model_.backward_joint(ds, dov);
      out.loss = total;
      break;
    }
    case StepKind::Concat: {
      auto fwd = model_.forward_all(input, nn::Mode::Train);
      RowMat dov;
      out.loss = nn::cross_entropy(fwd.overall_scores, targets, with_backward ? &dov : nullptr);
      if (with_backward) model_.backward_joint(std::vector<RowMat>(N), dov);
      break;
    }
  }
  return out;
}

Trainer::DeepestResult Trainer::train_step_deepest(const Tensor& batch,
                                                   const std::vector<int>& targets) {
  model_.zero_grad();
  auto ev = step_loss(StepKind::Deepest, model_.experts(), batch, targets, true);
  // Regions come from the pre-update forward pass and are detached data.
  DeepestResult result;
  result.loss = ev.loss;
  result.regions = model_.generate_regions(batch, *ev.fwd);
  sgd_update();
  return result;
}

Tensor Trainer::select_augmented_input(const Tensor& raw,
                                       const MultiExpertModel::Regions& regions,
                                       int expert, std::string* source_name) {
  const int N = model_.experts();
  if (static_cast<int>(regions.expert_crops.size()) != N)
    throw StateError("select_augmented_input: regions missing; the deepest step must run first");
  // pool entry 0 = raw, entry k = A_k (entry `expert` dropped in the
  // exclusion variant)
  std::vector<int> pool{0};
  for (int k = 1; k <= N; ++k)
    if (cfg_.pool_includes_self || k != expert) pool.push_back(k);

  auto entry_of = [&](int choice) -> const Tensor& {
    return choice == 0 ? raw : regions.expert_crops[choice - 1];
  };
  auto name_of = [](int choice) {
    return choice == 0 ? std::string("raw") : "A_" + std::to_string(choice);
  };

  if (!cfg_.pool_per_image) {
    const int choice = pool[uniform_index(pool_rng_, static_cast<int>(pool.size()))];
    if (source_name) *source_name = name_of(choice);
    return entry_of(choice);
  }
  Tensor mixed(raw.n, raw.h, raw.w, raw.c);
  const size_t per_image = static_cast<size_t>(raw.h) * raw.w * raw.c;
  for (int i = 0; i < raw.n; ++i) {
    const int choice = pool[uniform_index(pool_rng_, static_cast<int>(pool.size()))];
    const Tensor& src = entry_of(choice);
    std::copy(src.data.begin() + i * per_image, src.data.begin() + (i + 1) * per_image,
              mixed.data.begin() + i * per_image);
  }
  if (source_name) *source_name = "per-image";
  return mixed;
}

double Trainer::train_step_shallow(int n, const Tensor& input,
                                   const std::vector<int>& targets) {
  if (n < 1 || n >= model_.experts())
    throw ConfigError("train_step_shallow: expert index " + std::to_string(n) +
                      " outside 1..N-1");
  model_.zero_grad();
  auto ev = step_loss(StepKind::Shallow, n, input, targets, true);
  sgd_update();
  return ev.loss;
}

double Trainer::train_step_joint(const Tensor& overall_region,
                                 const std::vector<int>& targets) {
  model_.zero_grad();
  auto ev = step_loss(StepKind::Joint, 0, overall_region, targets, true);
  sgd_update();
  return ev.loss;
}

double Trainer::train_step_concat(const Tensor& raw, const std::vector<int>& targets) {
  model_.zero_grad();
  auto ev = step_loss(StepKind::Concat, 0, raw, targets, true);
  sgd_update();
  return ev.loss;
}

IterationTrace Trainer::run_iteration(const Tensor& raw, const std::vector<int>& targets) {
  const int N = model_.experts();
  IterationTrace trace;
  if (cfg_.plain_baseline) {
    model_.zero_grad();
    auto ev = step_loss(StepKind::Shallow, N, raw, targets, true);
    sgd_update();
    trace.push_back({1, "e" + std::to_string(N), "raw", ev.loss});
  } else {
    auto deep = train_step_deepest(raw, targets);
    trace.push_back({1, "e" + std::to_string(N), "raw", deep.loss});
    int step = 2;
    for (int n = N - 1; n >= 1; --n, ++step) {
      std::string source;
      Tensor input = select_augmented_input(raw, deep.regions, n, &source);
      const double loss = train_step_shallow(n, input, targets);
      trace.push_back({step, "e" + std::to_string(n), source, loss});
    }
    const double joint_loss = train_step_joint(deep.regions.overall_crop, targets);
    trace.push_back({step++, "joint", "A_oval", joint_loss});
    const double concat_loss = train_step_concat(raw, targets);
    trace.push_back({step++, "concat", "raw", concat_loss});
    if (static_cast<int>(trace.size()) != N + 2)
      throw StateError("iteration trace has wrong length");
  }
  for (const auto& rec : trace)
    if (!std::isfinite(rec.loss))
      throw TrainingError("non-finite loss in step '" + rec.component +
                          "' (input " + rec.input_source + ")");
  last_trace_ = trace;
  return trace;
}

double Trainer::evaluate_accuracy(const TrainingSet& data) {
  if (data.size() == 0) throw ValidationError("evaluate_accuracy: empty dataset");
  const int N = model_.experts();
  size_t correct = 0;
  std::vector<int> indices(data.size());
  std::iota(indices.begin(), indices.end(), 0);
  for (size_t start = 0; start < indices.size(); start += cfg_.batch_size) {
    const size_t end = std::min(indices.size(), start + cfg_.batch_size);
    std::vector<int> chunk(indices.begin() + start, indices.begin() + end);
    Tensor x = data.make_batch(chunk);
    std::vector<int> predicted;
    if (cfg_.plain_baseline) {
      auto f = model_.forward_expert(x, N, nn::Mode::Eval);
      for (int i = 0; i < x.n; ++i) predicted.push_back(nn::argmax_row(f.scores, i));
    } else {
      auto fused = predict_fused(model_, x);
      for (const auto& b : fused.bundles) predicted.push_back(b.predicted_class);
    }
    for (size_t i = 0; i < chunk.size(); ++i)
      if (predicted[i] == data.labels[chunk[i]]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainLog Trainer::fit(const TrainingSet& train, const TrainingSet& val) {
  if (train.size() == 0) throw ValidationError("fit: empty training set");
  if (train.size() != train.labels.size())
    throw ValidationError("fit: image/label count mismatch");
  for (int label : train.labels)
    if (label < 0 || label >= model_.num_classes())
      throw ValidationError("fit: label " + std::to_string(label) +
                            " outside class vocabulary");

  TrainLog log;
  const bool has_val = val.size() > 0;
  std::vector<double> best_snap;
  double best_acc = -1.0;
  int best_epoch = 0, since_best = 0;

  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    current_lr_ = cosine_lr(cfg_.learning_rate, cfg_.min_learning_rate, epoch, cfg_.epochs);
    std::shuffle(order.begin(), order.end(), order_rng_);

    std::vector<std::pair<std::string, double>> sums;
    auto add_loss = [&](const std::string& name, double v) {
      for (auto& [n, s] : sums)
        if (n == name) {
          s += v;
          return;
        }
      sums.emplace_back(name, v);
    };
    int batches = 0;
    for (size_t start = 0; start + 2 <= order.size(); start += cfg_.batch_size) {
      const size_t end = std::min(order.size(), start + cfg_.batch_size);
      if (end - start < 2) break;  // batch statistics need at least two samples
      std::vector<int> idx(order.begin() + start, order.begin() + end);
      Tensor x = train.make_batch(idx);
      std::vector<int> targets;
      targets.reserve(idx.size());
      for (int k : idx) targets.push_back(train.labels[k]);
      auto trace = run_iteration(x, targets);
      for (const auto& rec : trace) add_loss(rec.component, rec.loss);
      ++batches;
    }
    if (batches == 0) throw ValidationError("fit: training set smaller than a single batch");
    for (auto& [name, s] : sums) s /= batches;

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = current_lr_;
    rec.mean_losses = sums;
    rec.val_accuracy = has_val ? evaluate_accuracy(val) : 0.0;
    log.epochs.push_back(rec);

    // early stopping and best-weights tracking need a validation split;
    // without one the full epoch budget runs and the final weights stand
    if (!has_val) {
      best_epoch = epoch + 1;
      continue;
    }
    if (rec.val_accuracy > best_acc) {
      best_acc = rec.val_accuracy;
      best_epoch = epoch + 1;
      best_snap = model_.snapshot();
      since_best = 0;
    } else if (++since_best >= cfg_.patience) {
      log.stopped_early = true;
      break;
    }
  }
  if (has_val && !best_snap.empty()) model_.restore(best_snap);
  log.best_epoch = best_epoch;
  log.best_val_accuracy = best_acc;
  return log;
}

void Trainer::sgd_update() {
  size_t off = 0;
  for (const auto& p : trainable_) {
    for (size_t i = 0; i < p.count; ++i) {
      const double g = p.grad[i] + cfg_.weight_decay * p.value[i];
      velocity_[off + i] = cfg_.momentum * velocity_[off + i] + g;
      p.value[i] -= current_lr_ * velocity_[off + i];
    }
    off += p.count;
  }
}

}  // namespace fairgrain
