#pragma once

#include <string>
#include <vector>

#include "fairgrain/tensor.hpp"

namespace fairgrain {

/// Interleaved image with values in [0,1].
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<double> pix;

  Image() = default;
  Image(int h_, int w_, int c_)
      : h(h_), w(w_), c(c_), pix(static_cast<size_t>(h_) * w_ * c_, 0.0) {}

  double& at(int y, int x, int ch) {
    return pix[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  double at(int y, int x, int ch) const {
    return pix[(static_cast<size_t>(y) * w + x) * c + ch];
  }
};

/// Binary PPM (P6) / PGM (P5), 8-bit.
Image read_ppm(const std::string& path);
void write_ppm(const Image& img, const std::string& path);

Image resize_image(const Image& img, int th, int tw);

/// Four-band blue-green-yellow-red ramp for t in [0,1].
void heat_color(double t, double rgb[3]);

/// Blends a normalized attention map over an image: alpha * ramp + (1-alpha) * image.
Image overlay_heatmap(const Image& img, const Plane& normalized, double alpha);

}  // namespace fairgrain
