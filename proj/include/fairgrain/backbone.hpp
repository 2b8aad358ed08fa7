#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fairgrain/layers.hpp"

namespace fairgrain {

/// One backbone layer as seen by stage partitioning: a name and the spatial
/// size of its output map.
struct LayerShape {
  std::string name;
  int out_h = 0;
  int out_w = 0;
  bool is_conv = false;
};

/// Shape-level description of a backbone (classifier heads excluded).
struct BackboneDescriptor {
  std::string name;
  std::vector<LayerShape> layers;
};

/// A contiguous grouping of backbone layers by output spatial size.
struct StageSpec {
  int stage_count = 0;
  /// Per stage: [first, last] indices into the descriptor's layer list.
  std::vector<std::pair<int, int>> layer_ranges;
  /// Per stage: (height, width) of the stage output map.
  std::vector<std::pair<int, int>> spatial_sizes;
};

/// Expert n covers backbone stages 1..terminal_stage (1-based).
struct ExpertSpan {
  int expert_index = 0;
  int terminal_stage = 0;
};

/// Groups layers into maximal runs of equal output spatial size, shallow to
/// deep. Sizes must be non-increasing; a backbone without convolutional
/// layers is rejected.
StageSpec partition_stages(const BackboneDescriptor& desc);

/// Validates a span list against a stage spec: terminal stages strictly
/// increase and the last expert ends at the last stage.
void validate_spans(const std::vector<ExpertSpan>& spans, const StageSpec& spec);

struct StagedConvNetConfig {
  int in_channels = 3;
  int input_resolution = 448;
  std::vector<int> stage_widths;  // output channels per stage
  int convs_per_stage = 1;        // first conv of each stage downsamples by 2
};

/// A plain staged CNN: every stage opens with a stride-2 3x3 convolution and
/// holds spatial size for the rest of the stage. Each conv is followed by
/// batch norm and Elu.
class StagedConvNet {
 public:
  explicit StagedConvNet(const StagedConvNetConfig& cfg);

  const StagedConvNetConfig& config() const { return cfg_; }
  BackboneDescriptor descriptor() const;
  const StageSpec& stages() const { return stage_spec_; }
  int stage_count() const { return stage_spec_.stage_count; }
  int stage_out_channels(int stage) const { return cfg_.stage_widths[stage - 1]; }

  void init_params(Rng& rng);

  /// One shared forward pass up to `last_stage` (1-based); returns the output
  /// of every stage up to it. Caches activations for backward.
  std::vector<Tensor> forward_stages(const Tensor& x, int last_stage, nn::Mode mode);

  /// Feature maps at each expert's terminal stage from a single forward pass.
  std::vector<Tensor> forward_collect(const Tensor& images,
                                      const std::vector<ExpertSpan>& spans,
                                      nn::Mode mode);

  /// Backpropagates gradients injected at stage outputs. `taps[s]` (1-based
  /// key, empty tensors skipped) is added to the gradient flowing into stage
  /// s's output. Returns the gradient at the network input.
  Tensor backward_stages(const std::vector<Tensor>& taps);

  void collect_params(std::vector<nn::ParamRef>& out);
  void zero_grad();

 private:
  struct ConvBlock {
    nn::Conv2d conv;
    nn::BatchNorm2d bn;
    nn::Elu elu;
    ConvBlock(int in_ch, int out_ch, int stride)
        : conv(in_ch, out_ch, 3, stride, 1, /*bias=*/false), bn(out_ch) {}
  };
  struct Stage {
    std::vector<std::unique_ptr<ConvBlock>> blocks;
  };

  StagedConvNetConfig cfg_;
  std::vector<Stage> stages_;
  StageSpec stage_spec_;
  int last_forward_stage_ = 0;
};

}  // namespace fairgrain
