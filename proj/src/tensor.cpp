#include "fairgrain/tensor.hpp"

namespace fairgrain {

// Shared by attention-map upsampling and crop resizing so both use the same
// sampling kernel. `sstride`/`dstride` are element strides; rows are assumed
// packed (row pitch = width * stride), which covers both Plane and one
// channel of an NHWC tensor.
void bilinear_resize(const double* src, int sh, int sw, int sstride, double* dst, int th,
                     int tw, int dstride) {
  const double sy = th > 1 ? static_cast<double>(sh - 1) / (th - 1) : 0.0;
  const double sx = tw > 1 ? static_cast<double>(sw - 1) / (tw - 1) : 0.0;
  for (int ty = 0; ty < th; ++ty) {
    double fy = ty * sy;
    int y0 = static_cast<int>(fy);
    if (y0 >= sh - 1) y0 = sh - 2 < 0 ? 0 : sh - 2;
    int y1 = sh > 1 ? y0 + 1 : y0;
    double wy = fy - y0;
    for (int tx = 0; tx < tw; ++tx) {
      double fx = tx * sx;
      int x0 = static_cast<int>(fx);
      if (x0 >= sw - 1) x0 = sw - 2 < 0 ? 0 : sw - 2;
      int x1 = sw > 1 ? x0 + 1 : x0;
      double wx = fx - x0;
      const double* r0 = src + (static_cast<size_t>(y0) * sw) * sstride;
      const double* r1 = src + (static_cast<size_t>(y1) * sw) * sstride;
      double top = r0[x0 * sstride] * (1.0 - wx) + r0[x1 * sstride] * wx;
      double bot = r1[x0 * sstride] * (1.0 - wx) + r1[x1 * sstride] * wx;
      dst[(static_cast<size_t>(ty) * tw + tx) * dstride] = top * (1.0 - wy) + bot * wy;
    }
  }
}

}  // namespace fairgrain
