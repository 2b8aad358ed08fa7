#pragma once

#include <vector>

#include "fairgrain/model.hpp"

namespace fairgrain {

/// Which of the 2*(N+1) constituent scores to read.
struct ScoreSource {
  int expert = 0;       // 1..N, or 0 for the overall classifier
  bool from_region = false;  // false: raw input pass, true: overall-region pass
};

/// All scores produced for one input during fused inference: N+1 vectors
/// from the raw pass, N+1 from the overall-attention-region pass, and their
/// element-wise mean.
struct PredictionBundle {
  std::vector<Vec> raw_scores;     // experts 1..N, then overall
  std::vector<Vec> region_scores;  // same order
  Vec fused;
  int predicted_class = 0;  // argmax of fused, ties to the lowest index

  int constituents() const {
    return static_cast<int>(raw_scores.size() + region_scores.size());
  }
};

struct FusedOutput {
  std::vector<PredictionBundle> bundles;  // one per image
  std::vector<Box> overall_boxes;         // A_oval box per image (raw pass)
};

/// Two-pass fused inference: the raw input yields N+1 scores and the overall
/// attention region; the region pass yields N+1 more. Scores are fused as
/// raw logits unless `softmax_fuse` is set (then constituents are softmaxed
/// before averaging).
FusedOutput predict_fused(MultiExpertModel& model, const Tensor& images,
                          bool softmax_fuse = false);

/// One constituent score vector for a single image (batch index 0 of
/// `image`). Matches the corresponding entry of predict_fused's bundle.
Vec predict_single(MultiExpertModel& model, const Tensor& image, const ScoreSource& source,
                   bool softmax_fuse = false);

}  // namespace fairgrain
