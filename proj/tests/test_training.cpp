#include <map>
#include <random>

#include "doctest.h"
#include "fairgrain/training.hpp"

using namespace fairgrain;

namespace {

Rng data_rng(5150);

Tensor random_tensor(int n, int h, int w, int c, Rng& rng) {
  Tensor t(n, h, w, c);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

ModelConfig micro_config(int input, std::vector<int> widths, std::vector<int> spans,
                         int cv = 4, int classes = 2) {
  ModelConfig mc;
  mc.backbone.in_channels = 1;
  mc.backbone.input_resolution = input;
  mc.backbone.stage_widths = std::move(widths);
  mc.expert_stages = std::move(spans);
  mc.descriptor_len = cv;
  mc.num_classes = classes;
  return mc;
}

TrainConfig quick_train_config(std::uint64_t seed = 3) {
  TrainConfig tc;
  tc.learning_rate = 0.01;
  tc.seed = seed;
  tc.batch_size = 4;
  tc.epochs = 2;
  return tc;
}

struct GradSample {
  size_t param = 0;
  size_t index = 0;
  double analytic = 0.0;
};

// central-difference check of one training step's loss against the analytic
// gradients produced by that step's backward pass
void check_step_gradients(MultiExpertModel& model, Trainer& trainer,
                          Trainer::StepKind kind, int expert, const Tensor& input,
                          const std::vector<int>& targets, int samples, Rng& rng,
                          double tol) {
  const auto snap = model.snapshot();
  model.zero_grad();
  trainer.step_loss(kind, expert, input, targets, /*with_backward=*/true);

  std::vector<nn::ParamRef> trainable;
  for (const auto& p : model.params())
    if (p.grad != nullptr) trainable.push_back(p);

  std::vector<GradSample> picks;
  for (int s = 0; s < samples; ++s) {
    GradSample g;
    g.param = rng() % trainable.size();
    g.index = rng() % trainable[g.param].count;
    g.analytic = trainable[g.param].grad[g.index];
    picks.push_back(g);
  }
  model.restore(snap);  // clears the running-statistic drift from the forward

  for (const auto& g : picks) {
    auto& p = trainable[g.param];
    const double h = 1e-5 * std::max(1.0, std::abs(p.value[g.index]));
    model.restore(snap);
    p.value[g.index] += h;
    const double lp = trainer.step_loss(kind, expert, input, targets, false).loss;
    model.restore(snap);
    p.value[g.index] -= h;
    const double lm = trainer.step_loss(kind, expert, input, targets, false).loss;
    model.restore(snap);
    const double fd = (lp - lm) / (2 * h);
    if (std::abs(g.analytic - fd) < 1e-8) continue;  // both numerically zero
    const double rel = std::abs(g.analytic - fd) /
                       std::max({1e-8, std::abs(g.analytic), std::abs(fd)});
    INFO("param ", p.name, "[", g.index, "] analytic=", g.analytic, " fd=", fd);
    CHECK(rel < tol);
  }
}

}  // namespace

TEST_CASE("iteration trace: N=3 runs 5 steps in the mandated order") {
  MultiExpertModel model(micro_config(8, {2, 3, 4}, {1, 2, 3}));
  Rng rng(11);
  model.init_params(rng);
  Trainer trainer(model, quick_train_config());
  Tensor x = random_tensor(4, 8, 8, 1, data_rng);
  auto trace = trainer.run_iteration(x, {0, 1, 0, 1});
  REQUIRE(trace.size() == 5);
  CHECK(trace[0].component == "e3");
  CHECK(trace[0].input_source == "raw");
  CHECK(trace[1].component == "e2");
  CHECK(trace[2].component == "e1");
  CHECK(trace[3].component == "joint");
  CHECK(trace[3].input_source == "A_oval");
  CHECK(trace[4].component == "concat");
  CHECK(trace[4].input_source == "raw");
  for (int i = 0; i < 5; ++i) CHECK(trace[i].step_index == i + 1);
  for (const auto& rec : trace) {
    CHECK(std::isfinite(rec.loss));
    CHECK(rec.loss >= 0.0);
  }
}

TEST_CASE("iteration trace: N=1 runs 3 steps") {
  MultiExpertModel model(micro_config(8, {2, 3}, {2}));
  Rng rng(12);
  model.init_params(rng);
  Trainer trainer(model, quick_train_config());
  Tensor x = random_tensor(4, 8, 8, 1, data_rng);
  auto trace = trainer.run_iteration(x, {1, 0, 1, 0});
  REQUIRE(trace.size() == 3);
  CHECK(trace[0].component == "e1");
  CHECK(trace[1].component == "joint");
  CHECK(trace[2].component == "concat");
}

TEST_CASE("deepest step with N=1 produces A_1 and a matching overall region") {
  MultiExpertModel model(micro_config(8, {2, 3}, {2}));
  Rng rng(13);
  model.init_params(rng);
  Trainer trainer(model, quick_train_config());
  Tensor x = random_tensor(3, 8, 8, 1, data_rng);
  auto result = trainer.train_step_deepest(x, {0, 1, 0});
  REQUIRE(result.regions.expert_crops.size() == 1);
  REQUIRE(result.regions.overall_boxes.size() == 3);
  // with one expert the overall pipeline reduces to that expert's region
  for (int i = 0; i < 3; ++i) {
    CHECK(result.regions.boxes[0][i].row_min == result.regions.overall_boxes[i].row_min);
    CHECK(result.regions.boxes[0][i].col_max == result.regions.overall_boxes[i].col_max);
  }
  CHECK(result.loss >= 0.0);

  Tensor empty(0, 8, 8, 1);
  CHECK_THROWS_AS(trainer.train_step_deepest(empty, {}), ValidationError);
}

TEST_CASE("regions are deterministic for frozen weights") {
  MultiExpertModel model(micro_config(8, {2, 3, 4}, {1, 2, 3}));
  Rng rng(14);
  model.init_params(rng);
  Tensor x = random_tensor(2, 8, 8, 1, data_rng);
  auto f1 = model.forward_all(x, nn::Mode::Eval);
  auto r1 = model.generate_regions(x, f1);
  auto f2 = model.forward_all(x, nn::Mode::Eval);
  auto r2 = model.generate_regions(x, f2);
  for (int e = 0; e < 3; ++e)
    for (int i = 0; i < 2; ++i) {
      CHECK(r1.boxes[e][i].row_min == r2.boxes[e][i].row_min);
      CHECK(r1.boxes[e][i].col_min == r2.boxes[e][i].col_min);
    }
  for (size_t i = 0; i < r1.overall_crop.data.size(); ++i)
    CHECK(r1.overall_crop.data[i] == r2.overall_crop.data[i]);
}

TEST_CASE("region boxes do not depend on the targets (detached geometry)") {
  MultiExpertModel model(micro_config(8, {2, 3}, {1, 2}));
  Rng rng(15);
  model.init_params(rng);
  Tensor x = random_tensor(3, 8, 8, 1, data_rng);

  TrainConfig tc = quick_train_config();
  Trainer t1(model, tc);
  const auto snap = model.snapshot();
  auto ra = t1.train_step_deepest(x, {0, 0, 0}).regions;
  model.restore(snap);
  Trainer t2(model, tc);
  auto rb = t2.train_step_deepest(x, {1, 1, 1}).regions;
  for (int e = 0; e < 2; ++e)
    for (int i = 0; i < 3; ++i) {
      CHECK(ra.boxes[e][i].row_min == rb.boxes[e][i].row_min);
      CHECK(ra.boxes[e][i].row_max == rb.boxes[e][i].row_max);
    }
}

TEST_CASE("select_augmented_input draws uniformly and reproducibly") {
  MultiExpertModel model(micro_config(8, {2, 3, 4}, {1, 2, 3}));
  Rng rng(16);
  model.init_params(rng);

  MultiExpertModel::Regions regions;
  regions.expert_crops.assign(3, Tensor(2, 8, 8, 1));
  for (int e = 0; e < 3; ++e)
    for (auto& v : regions.expert_crops[e].data) v = e + 1.0;
  Tensor raw(2, 8, 8, 1);

  // missing regions: sequencing error
  {
    Trainer t(model, quick_train_config());
    MultiExpertModel::Regions none;
    CHECK_THROWS_AS(t.select_augmented_input(raw, none, 1, nullptr), StateError);
  }

  // frequency oracle over 10,000 draws: each pool entry ~1/4
  {
    Trainer t(model, quick_train_config(99));
    std::map<std::string, int> counts;
    for (int i = 0; i < 10000; ++i) {
      std::string src;
      t.select_augmented_input(raw, regions, 1, &src);
      counts[src]++;
    }
    REQUIRE(counts.size() == 4);
    for (const auto& [src, n] : counts)
      CHECK(std::abs(n / 10000.0 - 0.25) < 0.02);
  }

  // identical seeds replay the identical selection sequence
  {
    Trainer ta(model, quick_train_config(123));
    Trainer tb(model, quick_train_config(123));
    for (int i = 0; i < 50; ++i) {
      std::string sa, sb;
      ta.select_augmented_input(raw, regions, 1, &sa);
      tb.select_augmented_input(raw, regions, 1, &sb);
      CHECK(sa == sb);
    }
  }

  // pool-exclusion variant drops A_n for the expert in training
  {
    TrainConfig tc = quick_train_config(7);
    tc.pool_includes_self = false;
    Trainer t(model, tc);
    for (int i = 0; i < 200; ++i) {
      std::string src;
      t.select_augmented_input(raw, regions, 2, &src);
      CHECK(src != "A_2");
    }
  }
}

TEST_CASE("shallow step touches only its own prefix") {
  MultiExpertModel model(micro_config(8, {2, 3}, {1, 2}));
  Rng rng(17);
  model.init_params(rng);
  Trainer trainer(model, quick_train_config());
  Tensor x = random_tensor(3, 8, 8, 1, data_rng);

  model.zero_grad();
  trainer.step_loss(Trainer::StepKind::Shallow, 1, x, {0, 1, 0}, true);
  for (const auto& p : model.params()) {
    if (p.grad == nullptr) continue;
    const bool own = p.name.rfind("backbone.stage1", 0) == 0 ||
                     p.name.rfind("expert1", 0) == 0;
    double norm = 0.0;
    for (size_t i = 0; i < p.count; ++i) norm += std::abs(p.grad[i]);
    if (own)
      CHECK(norm > 0.0);
    else
      CHECK(norm == 0.0);
  }

  CHECK_THROWS_AS(trainer.train_step_shallow(2, x, {0, 1, 0}), ConfigError);
  CHECK_THROWS_AS(trainer.train_step_shallow(0, x, {0, 1, 0}), ConfigError);
}

TEST_CASE("joint loss equals the sum of its cross-entropy terms") {
  MultiExpertModel model(micro_config(8, {2, 3, 4}, {1, 2, 3}));
  Rng rng(18);
  model.init_params(rng);
  Trainer trainer(model, quick_train_config());
  Tensor x = random_tensor(4, 8, 8, 1, data_rng);
  std::vector<int> targets = {0, 1, 1, 0};

  const auto snap = model.snapshot();
  const double joint = trainer.step_loss(Trainer::StepKind::Joint, 0, x, targets, false).loss;
  model.restore(snap);
  auto fwd = model.forward_all(x, nn::Mode::Train);
  double sum = 0.0;
  for (int e = 0; e < 3; ++e) sum += nn::cross_entropy(fwd.scores[e], targets, nullptr);
  sum += nn::cross_entropy(fwd.overall_scores, targets, nullptr);
  CHECK(joint == doctest::Approx(sum).epsilon(1e-9));
}

TEST_CASE("concat step consumes the concatenation of per-expert descriptors") {
  MultiExpertModel model(micro_config(8, {2, 3}, {1, 2}));
  Rng rng(19);
  model.init_params(rng);
  Tensor x = random_tensor(2, 8, 8, 1, data_rng);
  auto fwd = model.forward_all(x, nn::Mode::Eval);
  RowMat rebuilt = concat_overall(fwd.descriptors);
  REQUIRE(rebuilt.rows() == fwd.overall_descriptor.rows());
  for (long i = 0; i < rebuilt.size(); ++i)
    CHECK(rebuilt.data()[i] == fwd.overall_descriptor.data()[i]);
}

TEST_CASE("per-step analytic gradients match central differences") {
  MultiExpertModel model(micro_config(8, {3, 4}, {1, 2}));
  size_t total = 0;
  for (const auto& p : model.params())
    if (p.grad) total += p.count;
  CHECK(total <= 2000);  // micro-model budget

  Rng rng(20);
  model.init_params(rng);
  Trainer trainer(model, quick_train_config());
  Tensor x = random_tensor(3, 8, 8, 1, data_rng);
  std::vector<int> targets = {0, 1, 0};
  Rng pick(2024);
  check_step_gradients(model, trainer, Trainer::StepKind::Deepest, 2, x, targets, 6, pick, 1e-4);
  check_step_gradients(model, trainer, Trainer::StepKind::Shallow, 1, x, targets, 6, pick, 1e-4);
  check_step_gradients(model, trainer, Trainer::StepKind::Joint, 0, x, targets, 6, pick, 1e-4);
  check_step_gradients(model, trainer, Trainer::StepKind::Concat, 0, x, targets, 6, pick, 1e-4);
}

TEST_CASE("cosine schedule decays from the base rate") {
  CHECK(cosine_lr(0.002, 0.0, 0, 10) == doctest::Approx(0.002));
  double prev = 1e9;
  for (int e = 0; e < 10; ++e) {
    const double lr = cosine_lr(0.002, 0.0, e, 10);
    CHECK(lr > 0.0);
    CHECK(lr < prev);
    prev = lr;
  }
  CHECK(cosine_lr(0.002, 0.0, 9, 10) <= 0.002);
}

TEST_CASE("fit produces a deterministic log for a fixed seed") {
  auto build_set = [](int count, Rng& rng) {
    TrainingSet set;
    set.height = set.width = 8;
    set.channels = 1;
    set.channel_mean = {0.5};
    set.channel_std = {0.5};
    for (int i = 0; i < count; ++i) {
      std::vector<std::uint8_t> img(64);
      for (auto& p : img) p = static_cast<std::uint8_t>(rng() % 256);
      set.images.push_back(std::move(img));
      set.labels.push_back(static_cast<int>(rng() % 2));
    }
    return set;
  };

  auto run_once = [&]() {
    Rng dr(31);
    TrainingSet train = build_set(16, dr);
    TrainingSet val = build_set(8, dr);
    MultiExpertModel model(micro_config(8, {2, 3}, {1, 2}));
    Rng rng(21);
    model.init_params(rng);
    TrainConfig tc = quick_train_config(55);
    tc.epochs = 2;
    Trainer trainer(model, tc);
    return trainer.fit(train, val).to_lines();
  };
  auto a = run_once();
  auto b = run_once();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK(a.size() == 3);  // two epoch lines + summary
}

TEST_CASE("fit validates inputs and aborts on non-finite loss") {
  MultiExpertModel model(micro_config(8, {2, 3}, {1, 2}));
  Rng rng(22);
  model.init_params(rng);
  TrainConfig tc = quick_train_config();
  Trainer trainer(model, tc);

  TrainingSet empty;
  empty.height = empty.width = 8;
  empty.channels = 1;
  empty.channel_mean = {0.5};
  empty.channel_std = {0.5};
  CHECK_THROWS_AS(trainer.fit(empty, empty), ValidationError);

  // poison one classifier weight; the very first step must abort
  for (const auto& p : model.params())
    if (p.name == "expert2.clf.weight") p.value[0] = std::nan("");
  Tensor x = random_tensor(4, 8, 8, 1, data_rng);
  CHECK_THROWS_AS(trainer.run_iteration(x, {0, 1, 0, 1}), TrainingError);
}

TEST_CASE("plain baseline mode runs a single step per batch") {
  MultiExpertModel model(micro_config(8, {2, 3}, {2}));
  Rng rng(23);
  model.init_params(rng);
  TrainConfig tc = quick_train_config();
  tc.plain_baseline = true;
  Trainer trainer(model, tc);
  Tensor x = random_tensor(4, 8, 8, 1, data_rng);
  auto trace = trainer.run_iteration(x, {0, 1, 0, 1});
  REQUIRE(trace.size() == 1);
  CHECK(trace[0].component == "e1");
  CHECK(trace[0].input_source == "raw");
}
