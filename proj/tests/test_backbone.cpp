#include <random>

#include "doctest.h"
#include "fairgrain/backbone.hpp"

using namespace fairgrain;

namespace {

Rng rng(777);

Tensor random_tensor(int n, int h, int w, int c) {
  Tensor t(n, h, w, c);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

// shape trace of a ResNet50-style backbone at 224x224 input (classifier
// heads excluded)
BackboneDescriptor resnet50_shapes() {
  BackboneDescriptor d;
  d.name = "resnet50";
  d.layers.push_back({"conv1", 112, 112, true});
  d.layers.push_back({"maxpool", 56, 56, false});
  for (int b = 0; b < 3; ++b) d.layers.push_back({"conv2_" + std::to_string(b), 56, 56, true});
  for (int b = 0; b < 4; ++b) d.layers.push_back({"conv3_" + std::to_string(b), 28, 28, true});
  for (int b = 0; b < 6; ++b) d.layers.push_back({"conv4_" + std::to_string(b), 14, 14, true});
  for (int b = 0; b < 3; ++b) d.layers.push_back({"conv5_" + std::to_string(b), 7, 7, true});
  return d;
}

int conv_out(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace

TEST_CASE("resnet50-style shape trace partitions into 5 stages") {
  auto spec = partition_stages(resnet50_shapes());
  CHECK(spec.stage_count == 5);
  CHECK(spec.spatial_sizes[0] == std::make_pair(112, 112));
  CHECK(spec.spatial_sizes[4] == std::make_pair(7, 7));
  // experts used with this backbone end at stages 3, 4, 5
  std::vector<ExpertSpan> spans = {{1, 3}, {2, 4}, {3, 5}};
  CHECK_NOTHROW(validate_spans(spans, spec));
}

TEST_CASE("single-stage toy CNN partitions into 1 stage") {
  BackboneDescriptor d;
  d.name = "flat";
  d.layers.push_back({"conv_a", 16, 16, true});
  d.layers.push_back({"conv_b", 16, 16, true});
  auto spec = partition_stages(d);
  CHECK(spec.stage_count == 1);
  CHECK(spec.layer_ranges[0] == std::make_pair(0, 1));
}

TEST_CASE("5-block halving CNN boundaries match a forward-shape trace") {
  StagedConvNetConfig cfg;
  cfg.in_channels = 3;
  cfg.input_resolution = 96;
  cfg.stage_widths = {4, 6, 8, 10, 12};
  StagedConvNet net(cfg);

  // independent shape trace using conv output arithmetic
  std::vector<int> expected;
  int size = 96;
  for (int s = 0; s < 5; ++s) {
    size = conv_out(size, 3, 2, 1);
    expected.push_back(size);
  }
  auto spec = partition_stages(net.descriptor());
  REQUIRE(spec.stage_count == 5);
  for (int s = 0; s < 5; ++s) {
    CHECK(spec.spatial_sizes[s].first == expected[s]);
    CHECK(spec.spatial_sizes[s].second == expected[s]);
  }
}

TEST_CASE("backbone without conv layers is rejected") {
  BackboneDescriptor d;
  d.name = "mlp";
  d.layers.push_back({"flatten", 1, 1, false});
  CHECK_THROWS_AS(partition_stages(d), ConfigError);
  BackboneDescriptor empty;
  empty.name = "none";
  CHECK_THROWS_AS(partition_stages(empty), ConfigError);
}

TEST_CASE("increasing spatial sizes are rejected") {
  BackboneDescriptor d;
  d.name = "decoder";
  d.layers.push_back({"conv", 8, 8, true});
  d.layers.push_back({"deconv", 16, 16, true});
  CHECK_THROWS_AS(partition_stages(d), ConfigError);
}

TEST_CASE("span validation") {
  auto spec = partition_stages(resnet50_shapes());
  std::vector<ExpertSpan> not_increasing = {{1, 4}, {2, 4}, {3, 5}};
  CHECK_THROWS_AS(validate_spans(not_increasing, spec), ConfigError);
  std::vector<ExpertSpan> not_ending_last = {{1, 3}, {2, 4}};
  CHECK_THROWS_AS(validate_spans(not_ending_last, spec), ConfigError);
  std::vector<ExpertSpan> out_of_range = {{1, 0}, {2, 5}};
  CHECK_THROWS_AS(validate_spans(out_of_range, spec), ConfigError);
}

TEST_CASE("forward_collect returns one map per expert with decreasing size") {
  StagedConvNetConfig cfg;
  cfg.input_resolution = 32;
  cfg.stage_widths = {4, 6, 8, 10, 12};
  StagedConvNet net(cfg);
  net.init_params(rng);
  Tensor x = random_tensor(2, 32, 32, 3);
  std::vector<ExpertSpan> spans = {{1, 3}, {2, 4}, {3, 5}};
  auto maps = net.forward_collect(x, spans, nn::Mode::Eval);
  REQUIRE(maps.size() == 3);
  CHECK(maps[0].h > maps[1].h);
  CHECK(maps[1].h > maps[2].h);
  CHECK(maps[0].n == 2);
  for (const auto& m : maps) CHECK(m.all_finite());
}

TEST_CASE("empty batch and bad span are rejected") {
  StagedConvNetConfig cfg;
  cfg.input_resolution = 16;
  cfg.stage_widths = {4, 6};
  StagedConvNet net(cfg);
  net.init_params(rng);
  Tensor empty(0, 16, 16, 3);
  std::vector<ExpertSpan> spans = {{1, 2}};
  CHECK_THROWS_AS(net.forward_collect(empty, spans, nn::Mode::Eval), ValidationError);
  std::vector<ExpertSpan> bad = {{1, 3}};
  Tensor x = random_tensor(1, 16, 16, 3);
  CHECK_THROWS_AS(net.forward_collect(x, bad, nn::Mode::Eval), ConfigError);
}

TEST_CASE("deepest expert map equals the plain full forward pass") {
  StagedConvNetConfig cfg;
  cfg.input_resolution = 32;
  cfg.stage_widths = {4, 6, 8};
  StagedConvNet net(cfg);
  net.init_params(rng);
  Tensor x = random_tensor(2, 32, 32, 3);
  std::vector<ExpertSpan> single = {{1, 3}};
  auto maps = net.forward_collect(x, single, nn::Mode::Eval);
  auto plain = net.forward_stages(x, 3, nn::Mode::Eval);
  REQUIRE(maps.size() == 1);
  REQUIRE(maps[0].same_shape(plain.back()));
  for (size_t i = 0; i < maps[0].data.size(); ++i) CHECK(maps[0].data[i] == plain.back().data[i]);
}

TEST_CASE("forward matches an independent layer-by-layer reference") {
  StagedConvNetConfig cfg;
  cfg.input_resolution = 8;
  cfg.stage_widths = {2, 3};
  StagedConvNet net(cfg);
  net.init_params(rng);
  Tensor x = random_tensor(2, 8, 8, 3);
  auto outs = net.forward_stages(x, 2, nn::Mode::Eval);

  // reference path: naive conv + eval-mode bn (identity at init: running
  // mean 0 / var 1, gamma 1, beta 0) + elu, all hand-rolled
  std::vector<nn::ParamRef> params;
  net.collect_params(params);
  auto tensor_of = [&](const std::string& name, int rows, int cols) {
    for (const auto& p : params)
      if (p.name == name) {
        RowMat m(rows, cols);
        std::copy(p.value, p.value + p.count, m.data());
        return m;
      }
    throw std::runtime_error("missing param " + name);
  };
  Tensor cur = x;
  const int widths[2] = {2, 3};
  int in_ch = 3;
  for (int s = 0; s < 2; ++s) {
    const int oc = widths[s];
    RowMat w = tensor_of("backbone.stage" + std::to_string(s + 1) + ".block1.conv.weight",
                         9 * in_ch, oc);
    const int oh = (cur.h + 2 - 3) / 2 + 1;
    const int ow = (cur.w + 2 - 3) / 2 + 1;
    Tensor y(cur.n, oh, ow, oc);
    for (int i = 0; i < cur.n; ++i)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          for (int c = 0; c < oc; ++c) {
            double acc = 0.0;
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int yy = oy * 2 - 1 + ky, xx = ox * 2 - 1 + kx;
                if (yy < 0 || yy >= cur.h || xx < 0 || xx >= cur.w) continue;
                for (int ic = 0; ic < cur.c; ++ic)
                  acc += cur.at(i, yy, xx, ic) * w((ky * 3 + kx) * cur.c + ic, c);
              }
            // eval-mode bn at init divides by sqrt(1 + eps); elu follows
            acc /= std::sqrt(1.0 + 1e-5);
            y.at(i, oy, ox, c) = acc > 0 ? acc : std::expm1(acc);
          }
    cur = y;
    in_ch = oc;
  }
  REQUIRE(outs.back().same_shape(cur));
  for (size_t i = 0; i < cur.data.size(); ++i)
    CHECK(outs.back().data[i] == doctest::Approx(cur.data[i]).epsilon(1e-9));
}

TEST_CASE("forward is deterministic for fixed weights") {
  StagedConvNetConfig cfg;
  cfg.input_resolution = 16;
  cfg.stage_widths = {4, 6};
  StagedConvNet net(cfg);
  net.init_params(rng);
  Tensor x = random_tensor(2, 16, 16, 3);
  auto a = net.forward_stages(x, 2, nn::Mode::Eval);
  auto b = net.forward_stages(x, 2, nn::Mode::Eval);
  for (size_t s = 0; s < a.size(); ++s)
    for (size_t i = 0; i < a[s].data.size(); ++i) CHECK(a[s].data[i] == b[s].data[i]);
}

TEST_CASE("expert maps depend only on their stage prefix") {
  StagedConvNetConfig cfg;
  cfg.input_resolution = 32;
  cfg.stage_widths = {4, 6, 8, 10, 12};
  StagedConvNet net(cfg);
  net.init_params(rng);
  Tensor x = random_tensor(1, 32, 32, 3);
  std::vector<ExpertSpan> spans = {{1, 3}, {2, 4}, {3, 5}};
  auto before = net.forward_collect(x, spans, nn::Mode::Eval);

  // perturb weights in stages deeper than expert 1's terminal stage
  std::vector<nn::ParamRef> params;
  net.collect_params(params);
  for (auto& p : params)
    if (p.name.rfind("backbone.stage4", 0) == 0 || p.name.rfind("backbone.stage5", 0) == 0)
      for (size_t i = 0; i < p.count; ++i) p.value[i] += 0.37;

  auto after = net.forward_collect(x, spans, nn::Mode::Eval);
  for (size_t i = 0; i < before[0].data.size(); ++i)
    CHECK(before[0].data[i] == after[0].data[i]);
  // the deepest expert's map must change
  double delta = 0.0;
  for (size_t i = 0; i < before[2].data.size(); ++i)
    delta += std::abs(before[2].data[i] - after[2].data[i]);
  CHECK(delta > 0.0);
}
