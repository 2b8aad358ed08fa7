#include "fairgrain/backbone.hpp"

#include <algorithm>

namespace fairgrain {

StageSpec partition_stages(const BackboneDescriptor& desc) {
  if (desc.layers.empty())
    throw ConfigError("partition_stages: backbone '" + desc.name + "' has no layers");
  if (std::none_of(desc.layers.begin(), desc.layers.end(),
                   [](const LayerShape& l) { return l.is_conv; }))
    throw ConfigError("partition_stages: backbone '" + desc.name +
                      "' has no convolutional layers");

  StageSpec spec;
  int start = 0;
  auto size_of = [&](int i) {
    return std::make_pair(desc.layers[i].out_h, desc.layers[i].out_w);
  };
  for (int i = 1; i <= static_cast<int>(desc.layers.size()); ++i) {
    if (i == static_cast<int>(desc.layers.size()) || size_of(i) != size_of(start)) {
      spec.layer_ranges.emplace_back(start, i - 1);
      spec.spatial_sizes.push_back(size_of(start));
      if (spec.spatial_sizes.size() >= 2) {
        const auto& prev = spec.spatial_sizes[spec.spatial_sizes.size() - 2];
        const auto& cur = spec.spatial_sizes.back();
        if (cur.first > prev.first || cur.second > prev.second)
          throw ConfigError("partition_stages: spatial sizes increase at layer '" +
                            desc.layers[start].name + "'");
      }
      start = i;
    }
  }
  spec.stage_count = static_cast<int>(spec.layer_ranges.size());
  return spec;
}

void validate_spans(const std::vector<ExpertSpan>& spans, const StageSpec& spec) {
  if (spans.empty()) throw ConfigError("expert spans: at least one expert required");
  for (size_t i = 0; i < spans.size(); ++i) {
    const int m = spans[i].terminal_stage;
    if (m < 1 || m > spec.stage_count)
      throw ConfigError("expert spans: terminal stage " + std::to_string(m) +
                        " outside 1.." + std::to_string(spec.stage_count));
    if (i > 0 && m <= spans[i - 1].terminal_stage)
      throw ConfigError("expert spans: terminal stages must strictly increase");
  }
  if (spans.back().terminal_stage != spec.stage_count)
    throw ConfigError("expert spans: deepest expert must end at the last stage");
}

StagedConvNet::StagedConvNet(const StagedConvNetConfig& cfg) : cfg_(cfg) {
  if (cfg.stage_widths.empty())
    throw ConfigError("staged convnet: stage_widths must be non-empty");
  if (cfg.convs_per_stage < 1)
    throw ConfigError("staged convnet: convs_per_stage must be >= 1");
  int in_ch = cfg.in_channels;
  for (int w : cfg.stage_widths) {
    Stage st;
    st.blocks.push_back(std::make_unique<ConvBlock>(in_ch, w, /*stride=*/2));
    for (int j = 1; j < cfg.convs_per_stage; ++j)
      st.blocks.push_back(std::make_unique<ConvBlock>(w, w, /*stride=*/1));
    stages_.push_back(std::move(st));
    in_ch = w;
  }
  stage_spec_ = partition_stages(descriptor());
  if (stage_spec_.stage_count != static_cast<int>(cfg.stage_widths.size()))
    throw ConfigError("staged convnet: input resolution too small for stage count");
}

BackboneDescriptor StagedConvNet::descriptor() const {
  BackboneDescriptor desc;
  desc.name = "staged-convnet";
  int size = cfg_.input_resolution;
  for (size_t s = 0; s < stages_.size(); ++s) {
    size = (size + 1) / 2;  // stride-2 conv with pad 1, kernel 3
    for (size_t b = 0; b < stages_[s].blocks.size(); ++b) {
      const std::string base =
          "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      desc.layers.push_back({base + ".conv", size, size, true});
      desc.layers.push_back({base + ".bn", size, size, false});
      desc.layers.push_back({base + ".elu", size, size, false});
    }
  }
  return desc;
}

void StagedConvNet::init_params(Rng& rng) {
  for (auto& st : stages_)
    for (auto& b : st.blocks) {
      const int fan_in = b->conv.weight.rows();
      nn::kaiming_init(b->conv.weight, fan_in, rng);
    }
}

std::vector<Tensor> StagedConvNet::forward_stages(const Tensor& x, int last_stage,
                                                  nn::Mode mode) {
  if (x.n == 0) throw ValidationError("forward: empty image batch");
  if (last_stage < 1 || last_stage > stage_count())
    throw ConfigError("forward: stage index out of range");
  std::vector<Tensor> outs;
  Tensor cur = x;
  for (int s = 0; s < last_stage; ++s) {
    for (auto& b : stages_[s].blocks) {
      cur = b->conv.forward(cur);
      cur = b->bn.forward(cur, mode);
      cur = b->elu.forward(cur);
    }
    outs.push_back(cur);
  }
  last_forward_stage_ = last_stage;
  return outs;
}

std::vector<Tensor> StagedConvNet::forward_collect(const Tensor& images,
                                                   const std::vector<ExpertSpan>& spans,
                                                   nn::Mode mode) {
  validate_spans(spans, stage_spec_);
  auto outs = forward_stages(images, spans.back().terminal_stage, mode);
  std::vector<Tensor> maps;
  maps.reserve(spans.size());
  for (const auto& sp : spans) maps.push_back(outs[sp.terminal_stage - 1]);
  return maps;
}

Tensor StagedConvNet::backward_stages(const std::vector<Tensor>& taps) {
  if (last_forward_stage_ == 0) throw StateError("backward before forward");
  Tensor grad;
  for (int s = last_forward_stage_; s >= 1; --s) {
    if (s <= static_cast<int>(taps.size()) && taps[s - 1].size() > 0) {
      if (grad.size() == 0) {
        grad = taps[s - 1];
      } else {
        if (!grad.same_shape(taps[s - 1]))
          throw StateError("backward: tap shape mismatch at stage " + std::to_string(s));
        for (size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += taps[s - 1].data[i];
      }
    }
    if (grad.size() == 0) continue;  // nothing injected at or above this stage
    auto& blocks = stages_[s - 1].blocks;
    for (int b = static_cast<int>(blocks.size()) - 1; b >= 0; --b) {
      grad = blocks[b]->elu.backward(grad);
      grad = blocks[b]->bn.backward(grad);
      grad = blocks[b]->conv.backward(grad);
    }
  }
  return grad;
}

void StagedConvNet::collect_params(std::vector<nn::ParamRef>& out) {
  for (size_t s = 0; s < stages_.size(); ++s)
    for (size_t b = 0; b < stages_[s].blocks.size(); ++b) {
      const std::string prefix =
          "backbone.stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      stages_[s].blocks[b]->conv.collect_params(prefix + ".conv", out);
      stages_[s].blocks[b]->bn.collect_params(prefix + ".bn", out);
    }
}

void StagedConvNet::zero_grad() {
  for (auto& st : stages_)
    for (auto& b : st.blocks) {
      b->conv.zero_grad();
      b->bn.zero_grad();
    }
}

}  // namespace fairgrain
