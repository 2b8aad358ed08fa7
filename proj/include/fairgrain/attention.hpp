#pragma once

#include <vector>

#include "fairgrain/image.hpp"
#include "fairgrain/tensor.hpp"

namespace fairgrain {

struct MaskConfig {
  double threshold = 0.5;  // in [0,1]
};

/// Inclusive pixel box in (row, col) coordinates.
struct Box {
  int row_min = 0, col_min = 0, row_max = 0, col_max = 0;

  int height() const { return row_max - row_min + 1; }
  int width() const { return col_max - col_min + 1; }
  bool contains(int row, int col) const {
    return row >= row_min && row <= row_max && col >= col_min && col <= col_max;
  }
};

/// CAM at map resolution plus its upsampled and min-max normalized forms.
struct AttentionMap {
  Plane raw_cam;
  Plane upsampled;
  Plane normalized;
};

constexpr int kOverallRegion = 0;  // source_expert value for the overall region

struct AttentionRegion {
  Box box;
  Image crop;              // resized back to the input resolution
  int source_expert = 0;   // 1..N, or kOverallRegion
};

/// Weighted channel sum of the pre-pooling map for one image:
/// cam(y,x) = sum_c weights[c] * xpp(y,x,c).
Plane compute_cam(const Tensor& xpp, int image_index, const Vec& class_weights);

Plane upsample_bilinear(const Plane& cam, int target_h, int target_w);

/// (x - min) / (max - min); a constant map yields all zeros.
Plane normalize_minmax(const Plane& map);

/// 1 where value is strictly greater than the threshold, else 0.
Plane threshold_mask(const Plane& norm_map, const MaskConfig& cfg);

/// Tight bounding box over positive mask cells; false if the mask is empty.
bool mask_bounding_box(const Plane& mask, Box& box);

/// Crops the positive-cell bounding box from the image and resizes it back
/// to the image's own resolution. An empty mask falls back to the full image.
AttentionRegion extract_region(const Image& image, const Plane& mask, int source_expert);

/// Sums per-expert normalized maps, re-normalizes, thresholds, and extracts
/// the overall region.
AttentionRegion overall_attention(const std::vector<Plane>& norm_maps, const Image& image,
                                  const MaskConfig& cfg);

/// Box-crop + resize applied directly to one image of an NHWC batch; used by
/// the training loop so augmented inputs share the exact sampling kernel.
void crop_resize_into(const Tensor& src, int src_index, const Box& box, Tensor& dst,
                      int dst_index);

/// Element-wise sum of equally sized planes followed by min-max normalization.
Plane sum_normalize(const std::vector<Plane>& maps);

}  // namespace fairgrain
