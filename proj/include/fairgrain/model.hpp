#pragma once

#include <vector>

#include "fairgrain/attention.hpp"
#include "fairgrain/backbone.hpp"
#include "fairgrain/experts.hpp"

namespace fairgrain {

struct ModelConfig {
  StagedConvNetConfig backbone;
  std::vector<int> expert_stages;  // terminal stage per expert, strictly increasing
  int descriptor_len = 512;        // C_v
  int num_classes = 2;
  double mask_threshold = 0.5;
  nn::PoolKind pool = nn::PoolKind::GlobalMax;
};

/// Backbone + N expert heads + the overall (concatenated) classifier.
class MultiExpertModel {
 public:
  explicit MultiExpertModel(const ModelConfig& cfg);
  MultiExpertModel(const MultiExpertModel&) = delete;
  MultiExpertModel& operator=(const MultiExpertModel&) = delete;

  void init_params(Rng& rng);

  int experts() const { return static_cast<int>(spans_.size()); }
  int num_classes() const { return cfg_.num_classes; }
  int input_resolution() const { return cfg_.backbone.input_resolution; }
  const ModelConfig& config() const { return cfg_; }
  const std::vector<ExpertSpan>& spans() const { return spans_; }
  StagedConvNet& backbone() { return backbone_; }
  ExpertHead& head(int n) { return heads_[n - 1]; }  // 1-based

  struct Forward {
    std::vector<Tensor> xpps;         // pre-pooling map per expert
    std::vector<RowMat> descriptors;  // [n, C_v] per expert
    std::vector<RowMat> scores;       // [n, K] per expert
    RowMat overall_descriptor;        // [n, N*C_v]
    RowMat overall_scores;            // [n, K]
  };

  /// Shared forward through all stages, every head, and the overall
  /// classifier. `head_modes` has one entry per expert.
  Forward forward_all(const Tensor& x, nn::Mode stage_mode,
                      const std::vector<nn::Mode>& head_modes);
  Forward forward_all(const Tensor& x, nn::Mode mode);

  struct ExpertForward {
    Tensor xpp;
    RowMat descriptors;
    RowMat scores;
  };

  /// Forward through stages 1..m_n and head n only.
  ExpertForward forward_expert(const Tensor& x, int n, nn::Mode mode);

  /// Cross-entropy gradient on expert n's scores, backward through head n
  /// and its stage prefix. Valid after a forward that covered them.
  void backward_expert(int n, const RowMat& dscores);

  /// Joint backward: per-expert score gradients (empty matrices are skipped)
  /// plus the overall-classifier score gradient. Valid after forward_all.
  void backward_joint(const std::vector<RowMat>& dscores, const RowMat& doverall);

  /// Per-image attention regions for every expert plus the overall region,
  /// derived from a completed forward pass. Crops are detached inputs; no
  /// gradient flows through them.
  struct Regions {
    std::vector<std::vector<AttentionMap>> maps;  // [expert][image]
    std::vector<std::vector<Box>> boxes;          // [expert][image]
    std::vector<Tensor> expert_crops;             // [expert], each [n,h,w,c]
    std::vector<Box> overall_boxes;               // [image]
    std::vector<Plane> overall_maps;              // re-normalized sum, [image]
    Tensor overall_crop;                          // [n,h,w,c]
  };
  Regions generate_regions(const Tensor& x, const Forward& fwd) const;

  std::vector<nn::ParamRef> params();  // includes running statistics
  void zero_grad();

  /// Full value snapshot (parameters + running statistics).
  std::vector<double> snapshot() const;
  void restore(const std::vector<double>& snap);

 private:
  ModelConfig cfg_;
  StagedConvNet backbone_;
  std::vector<ExpertSpan> spans_;
  std::vector<ExpertHead> heads_;
  nn::Linear overall_clf_;
  std::vector<nn::ParamRef> param_cache_;
};

}  // namespace fairgrain
