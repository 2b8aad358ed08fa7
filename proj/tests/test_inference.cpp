#include <cstring>
#include <random>

#include "doctest.h"
#include "fairgrain/inference.hpp"

using namespace fairgrain;

namespace {

Rng data_rng(616);

Tensor random_tensor(int n, int h, int w, int c) {
  Tensor t(n, h, w, c);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.data) v = dist(data_rng);
  return t;
}

ModelConfig small_config(std::vector<int> widths, std::vector<int> spans) {
  ModelConfig mc;
  mc.backbone.in_channels = 1;
  mc.backbone.input_resolution = 8;
  mc.backbone.stage_widths = std::move(widths);
  mc.expert_stages = std::move(spans);
  mc.descriptor_len = 4;
  mc.num_classes = 3;
  return mc;
}

}  // namespace

TEST_CASE("predict_fused averages exactly 2*(N+1) score vectors") {
  MultiExpertModel model(small_config({2, 3, 4}, {1, 2, 3}));
  Rng rng(41);
  model.init_params(rng);
  Tensor x = random_tensor(2, 8, 8, 1);
  auto out = predict_fused(model, x);
  REQUIRE(out.bundles.size() == 2);
  for (const auto& b : out.bundles) {
    CHECK(b.constituents() == 8);  // N = 3
    // element-wise mean oracle
    for (int k = 0; k < 3; ++k) {
      double s = 0.0;
      for (const auto& v : b.raw_scores) s += v[k];
      for (const auto& v : b.region_scores) s += v[k];
      CHECK(b.fused[k] == doctest::Approx(s / 8.0).epsilon(1e-9));
    }
    // argmax invariant under constant shifts of every constituent
    Vec shifted = b.fused.array() + 17.5;
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (shifted[k] > shifted[best]) best = k;
    CHECK(best == b.predicted_class);
  }
  REQUIRE(out.overall_boxes.size() == 2);
}

TEST_CASE("fused inference is exactly reproducible") {
  MultiExpertModel model(small_config({2, 3}, {1, 2}));
  Rng rng(42);
  model.init_params(rng);
  Tensor x = random_tensor(3, 8, 8, 1);
  auto a = predict_fused(model, x);
  auto b = predict_fused(model, x);
  for (size_t i = 0; i < a.bundles.size(); ++i) {
    CHECK(std::memcmp(a.bundles[i].fused.data(), b.bundles[i].fused.data(),
                      sizeof(double) * a.bundles[i].fused.size()) == 0);
    CHECK(a.bundles[i].predicted_class == b.bundles[i].predicted_class);
  }
}

TEST_CASE("predict_single returns the matching bundle constituent") {
  MultiExpertModel model(small_config({2, 3}, {1, 2}));
  Rng rng(43);
  model.init_params(rng);
  Tensor x = random_tensor(1, 8, 8, 1);
  auto bundle = predict_fused(model, x).bundles.front();

  for (int expert = 0; expert <= 2; ++expert)
    for (bool region : {false, true}) {
      Vec s = predict_single(model, x, {expert, region});
      const auto& side = region ? bundle.region_scores : bundle.raw_scores;
      const Vec& want = expert == 0 ? side.back() : side[expert - 1];
      REQUIRE(s.size() == want.size());
      for (int k = 0; k < s.size(); ++k) CHECK(s[k] == want[k]);
    }

  CHECK_THROWS_AS(predict_single(model, x, {5, false}), ConfigError);
  CHECK_THROWS_AS(predict_single(model, x, {-1, false}), ConfigError);
}

TEST_CASE("with N=1 the raw overall source equals the plain forward pass") {
  MultiExpertModel model(small_config({2, 3}, {2}));
  Rng rng(44);
  model.init_params(rng);
  Tensor x = random_tensor(1, 8, 8, 1);
  Vec via_single = predict_single(model, x, {0, false});
  auto fwd = model.forward_all(x, nn::Mode::Eval);
  for (int k = 0; k < 3; ++k)
    CHECK(via_single[k] == fwd.overall_scores(0, k));
}

TEST_CASE("removing a constituent changes the mean unless all are equal") {
  MultiExpertModel model(small_config({2, 3}, {1, 2}));
  Rng rng(45);
  model.init_params(rng);
  Tensor x = random_tensor(1, 8, 8, 1);
  auto b = predict_fused(model, x).bundles.front();
  std::vector<Vec> all = b.raw_scores;
  all.insert(all.end(), b.region_scores.begin(), b.region_scores.end());
  for (size_t drop = 0; drop < all.size(); ++drop) {
    Vec mean = Vec::Zero(3);
    for (size_t i = 0; i < all.size(); ++i)
      if (i != drop) mean += all[i];
    mean /= static_cast<double>(all.size() - 1);
    CHECK((mean - b.fused).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("softmax fusion stores softmaxed constituents and keeps the mean invariant") {
  MultiExpertModel model(small_config({2, 3}, {1, 2}));
  Rng rng(46);
  model.init_params(rng);
  Tensor x = random_tensor(1, 8, 8, 1);
  auto b = predict_fused(model, x, /*softmax_fuse=*/true).bundles.front();
  for (const auto& v : b.raw_scores) {
    CHECK(v.sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (int k = 0; k < v.size(); ++k) CHECK(v[k] >= 0.0);
  }
  Vec mean = Vec::Zero(3);
  for (const auto& v : b.raw_scores) mean += v;
  for (const auto& v : b.region_scores) mean += v;
  mean /= static_cast<double>(b.constituents());
  for (int k = 0; k < 3; ++k) CHECK(b.fused[k] == doctest::Approx(mean[k]).epsilon(1e-12));
}

TEST_CASE("empty batch is rejected") {
  MultiExpertModel model(small_config({2, 3}, {1, 2}));
  Rng rng(47);
  model.init_params(rng);
  Tensor empty(0, 8, 8, 1);
  CHECK_THROWS_AS(predict_fused(model, empty), ValidationError);
}
