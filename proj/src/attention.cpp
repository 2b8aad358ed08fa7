#include "fairgrain/attention.hpp"

#include <algorithm>

namespace fairgrain {

Plane compute_cam(const Tensor& xpp, int image_index, const Vec& class_weights) {
  if (class_weights.size() != xpp.c)
    throw ConfigError("compute_cam: weight length " + std::to_string(class_weights.size()) +
                      " does not match channel count " + std::to_string(xpp.c));
  if (image_index < 0 || image_index >= xpp.n)
    throw ConfigError("compute_cam: image index out of range");
  Plane cam(xpp.h, xpp.w);
  for (int y = 0; y < xpp.h; ++y) {
    for (int x = 0; x < xpp.w; ++x) {
      const double* px = &xpp.data[((static_cast<size_t>(image_index) * xpp.h + y) * xpp.w + x) * xpp.c];
      double s = 0.0;
      for (int c = 0; c < xpp.c; ++c) s += class_weights[c] * px[c];
      cam.at(y, x) = s;
    }
  }
  return cam;
}

Plane upsample_bilinear(const Plane& cam, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0)
    throw ConfigError("upsample_bilinear: target size must be positive");
  return bilinear_resize(cam, target_h, target_w);
}

Plane normalize_minmax(const Plane& map) {
  const auto [mn_it, mx_it] = std::minmax_element(map.v.begin(), map.v.end());
  const double mn = *mn_it, mx = *mx_it;
  Plane out(map.h, map.w);
  if (mx > mn) {
    // divide (not multiply by a reciprocal) so the max lands exactly on 1
    const double range = mx - mn;
    for (size_t i = 0; i < map.v.size(); ++i) out.v[i] = (map.v[i] - mn) / range;
  }
  // constant map: all zeros, so downstream falls back to the full-image box
  return out;
}

Plane threshold_mask(const Plane& norm_map, const MaskConfig& cfg) {
  if (cfg.threshold < 0.0 || cfg.threshold > 1.0)
    throw ConfigError("threshold_mask: threshold must be in [0,1]");
  Plane mask(norm_map.h, norm_map.w);
  for (size_t i = 0; i < norm_map.v.size(); ++i)
    mask.v[i] = norm_map.v[i] > cfg.threshold ? 1.0 : 0.0;
  return mask;
}

bool mask_bounding_box(const Plane& mask, Box& box) {
  int rmin = mask.h, rmax = -1, cmin = mask.w, cmax = -1;
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      if (mask.at(y, x) > 0.0) {
        rmin = std::min(rmin, y);
        rmax = std::max(rmax, y);
        cmin = std::min(cmin, x);
        cmax = std::max(cmax, x);
      }
  if (rmax < 0) return false;
  box = {rmin, cmin, rmax, cmax};
  return true;
}

AttentionRegion extract_region(const Image& image, const Plane& mask, int source_expert) {
  if (mask.h != image.h || mask.w != image.w)
    throw ConfigError("extract_region: mask and image dimensions differ");
  AttentionRegion region;
  region.source_expert = source_expert;
  if (!mask_bounding_box(mask, region.box))
    region.box = {0, 0, image.h - 1, image.w - 1};
  const Box& b = region.box;
  Image cropped(b.height(), b.width(), image.c);
  for (int y = 0; y < cropped.h; ++y)
    for (int x = 0; x < cropped.w; ++x)
      for (int ch = 0; ch < image.c; ++ch)
        cropped.at(y, x, ch) = image.at(b.row_min + y, b.col_min + x, ch);
  region.crop = resize_image(cropped, image.h, image.w);
  return region;
}

AttentionRegion overall_attention(const std::vector<Plane>& norm_maps, const Image& image,
                                  const MaskConfig& cfg) {
  if (norm_maps.empty()) throw ConfigError("overall_attention: no attention maps");
  Plane combined = sum_normalize(norm_maps);
  Plane mask = threshold_mask(combined, cfg);
  return extract_region(image, mask, kOverallRegion);
}

void crop_resize_into(const Tensor& src, int src_index, const Box& box, Tensor& dst,
                      int dst_index) {
  const int bh = box.height(), bw = box.width();
  std::vector<double> channel(static_cast<size_t>(bh) * bw);
  for (int ch = 0; ch < src.c; ++ch) {
    for (int y = 0; y < bh; ++y)
      for (int x = 0; x < bw; ++x)
        channel[static_cast<size_t>(y) * bw + x] =
            src.at(src_index, box.row_min + y, box.col_min + x, ch);
    bilinear_resize(channel.data(), bh, bw, 1,
                    &dst.data[(static_cast<size_t>(dst_index) * dst.h * dst.w) * dst.c + ch],
                    dst.h, dst.w, dst.c);
  }
}

Plane sum_normalize(const std::vector<Plane>& maps) {
  Plane sum(maps.front().h, maps.front().w);
  for (const auto& m : maps) {
    if (m.h != sum.h || m.w != sum.w)
      throw ConfigError("sum_normalize: map dimensions differ");
    for (size_t i = 0; i < sum.v.size(); ++i) sum.v[i] += m.v[i];
  }
  return normalize_minmax(sum);
}

}  // namespace fairgrain
