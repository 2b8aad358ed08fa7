#pragma once

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <vector>

#include "fairgrain/common.hpp"

namespace fairgrain {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

/// Batched activation volume, laid out NHWC (channel fastest).
struct Tensor {
  int n = 0, h = 0, w = 0, c = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int h_, int w_, int c_)
      : n(n_), h(h_), w(w_), c(c_), data(static_cast<size_t>(n_) * h_ * w_ * c_, 0.0) {}

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.n, t.h, t.w, t.c); }

  size_t size() const { return data.size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && h == o.h && w == o.w && c == o.c;
  }

  double& at(int i, int y, int x, int ch) {
    return data[((static_cast<size_t>(i) * h + y) * w + x) * c + ch];
  }
  double at(int i, int y, int x, int ch) const {
    return data[((static_cast<size_t>(i) * h + y) * w + x) * c + ch];
  }

  /// View as (n*h*w) x c row-major matrix.
  MatMap as_rows() { return MatMap(data.data(), static_cast<long>(n) * h * w, c); }
  ConstMatMap as_rows() const {
    return ConstMatMap(data.data(), static_cast<long>(n) * h * w, c);
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Single-channel rank-2 map (CAMs, masks, attention maps).
struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0.0) {}

  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

/// Corner-aligned bilinear resample of one channel plane. The four source
/// corners map exactly onto the four target corners; a same-size resample is
/// the identity.
void bilinear_resize(const double* src, int sh, int sw, int sstride, double* dst, int th,
                     int tw, int dstride);

inline Plane bilinear_resize(const Plane& src, int th, int tw) {
  Plane out(th, tw);
  bilinear_resize(src.v.data(), src.h, src.w, 1, out.v.data(), th, tw, 1);
  return out;
}

}  // namespace fairgrain
