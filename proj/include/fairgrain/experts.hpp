#pragma once

#include <vector>

#include "fairgrain/layers.hpp"

namespace fairgrain {

/// Per-expert descriptor head: 1x1 conv to descriptor_len/2 channels, 3x3
/// conv to descriptor_len channels (batch norm + Elu after each), global
/// pooling to a descriptor row, and a linear classifier.
class ExpertHead {
 public:
  ExpertHead(int in_channels, int descriptor_len, int num_classes,
             nn::PoolKind pool = nn::PoolKind::GlobalMax);

  void init_params(Rng& rng);

  /// Compresses a stage feature map into per-image descriptors [n, C_v] and
  /// returns the pre-pooling map x'' (kept for CAM generation).
  std::pair<RowMat, Tensor> compress(const Tensor& x, nn::Mode mode);

  /// scores = W v + b per image row.
  RowMat classify(const RowMat& descriptors);

  /// Backward through the classifier only: d(scores) -> d(descriptors).
  RowMat backward_classify(const RowMat& dscores);

  /// Backward from descriptor gradients through pooling and both conv
  /// blocks; returns the gradient at the stage feature map.
  Tensor backward_compress(const RowMat& ddesc);

  void collect_params(const std::string& prefix, std::vector<nn::ParamRef>& out);
  void zero_grad();

  int descriptor_len() const { return descriptor_len_; }
  int num_classes() const { return classifier_.out_dim(); }
  int in_channels() const { return reduce_.in_ch(); }
  const RowMat& classifier_weights() const { return classifier_.weight; }
  nn::PoolKind pool_kind() const { return pool_.kind(); }

 private:
  int descriptor_len_;
  nn::Conv2d reduce_;   // 1x1, C_n -> C_v/2
  nn::BatchNorm2d bn1_;
  nn::Elu elu1_;
  nn::Conv2d expand_;   // 3x3, C_v/2 -> C_v
  nn::BatchNorm2d bn2_;
  nn::Elu elu2_;
  nn::GlobalPool pool_;
  nn::Linear classifier_;
};

/// Concatenates N per-expert descriptor matrices [n, C_v] into [n, N*C_v],
/// expert order preserved.
RowMat concat_overall(const std::vector<RowMat>& descriptors);

/// Splits a concatenated gradient back into per-expert slices.
std::vector<RowMat> split_overall(const RowMat& doverall, int experts);

}  // namespace fairgrain
