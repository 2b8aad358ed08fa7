#include "fairgrain/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fairgrain::nn {

namespace {

void im2col(const Tensor& x, int kernel, int stride, int pad, int oh, int ow,
            RowMat& cols) {
  const int k2c = kernel * kernel * x.c;
  cols.resize(static_cast<long>(x.n) * oh * ow, k2c);
  long row = 0;
  for (int i = 0; i < x.n; ++i) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++row) {
        double* dst = cols.data() + row * k2c;
        for (int ky = 0; ky < kernel; ++ky) {
          const int y = oy * stride - pad + ky;
          for (int kx = 0; kx < kernel; ++kx) {
            const int xx = ox * stride - pad + kx;
            if (y < 0 || y >= x.h || xx < 0 || xx >= x.w) {
              std::fill(dst, dst + x.c, 0.0);
            } else {
              const double* src = &x.data[((static_cast<size_t>(i) * x.h + y) * x.w + xx) * x.c];
              std::copy(src, src + x.c, dst);
            }
            dst += x.c;
          }
        }
      }
    }
  }
}

void col2im(const RowMat& cols, int kernel, int stride, int pad, int oh, int ow,
            Tensor& dx) {
  const int k2c = kernel * kernel * dx.c;
  long row = 0;
  for (int i = 0; i < dx.n; ++i) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++row) {
        const double* src = cols.data() + row * k2c;
        for (int ky = 0; ky < kernel; ++ky) {
          const int y = oy * stride - pad + ky;
          for (int kx = 0; kx < kernel; ++kx) {
            const int xx = ox * stride - pad + kx;
            if (y >= 0 && y < dx.h && xx >= 0 && xx < dx.w) {
              double* dst = &dx.data[((static_cast<size_t>(i) * dx.h + y) * dx.w + xx) * dx.c];
              for (int ch = 0; ch < dx.c; ++ch) dst[ch] += src[ch];
            }
            src += dx.c;
          }
        }
      }
    }
  }
}

}  // namespace

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, bool bias)
    : has_bias(bias), in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad) {
  const int k2c = kernel * kernel * in_ch;
  weight = RowMat::Zero(k2c, out_ch);
  w_grad = RowMat::Zero(k2c, out_ch);
  this->bias = Vec::Zero(out_ch);
  b_grad = Vec::Zero(out_ch);
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c != in_ch_) throw ConfigError("conv: input has " + std::to_string(x.c) +
                                       " channels, layer expects " + std::to_string(in_ch_));
  const int oh = out_size(x.h), ow = out_size(x.w);
  if (oh <= 0 || ow <= 0) throw ConfigError("conv: spatial input too small for kernel");
  im2col(x, kernel_, stride_, pad_, oh, ow, cols_);
  cached_n_ = x.n;
  cached_h_ = x.h;
  cached_w_ = x.w;
  Tensor y(x.n, oh, ow, out_ch_);
  MatMap ym = y.as_rows();
  ym.noalias() = cols_ * weight;
  if (has_bias) ym.rowwise() += bias.transpose();
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const ConstMatMap dym = dy.as_rows();
  w_grad.noalias() += cols_.transpose() * dym;
  if (has_bias) b_grad.noalias() += dym.colwise().sum().transpose();
  RowMat dcols = dym * weight.transpose();
  Tensor dx(cached_n_, cached_h_, cached_w_, in_ch_);
  col2im(dcols, kernel_, stride_, pad_, dy.h, dy.w, dx);
  return dx;
}

void Conv2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", weight.data(), w_grad.data(),
                 static_cast<size_t>(weight.size())});
  if (has_bias)
    out.push_back({prefix + ".bias", bias.data(), b_grad.data(),
                   static_cast<size_t>(bias.size())});
}

void Conv2d::zero_grad() {
  w_grad.setZero();
  b_grad.setZero();
}

BatchNorm2d::BatchNorm2d(int channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
  gamma = Vec::Ones(channels);
  beta = Vec::Zero(channels);
  g_grad = Vec::Zero(channels);
  b_grad = Vec::Zero(channels);
  running_mean = Vec::Zero(channels);
  running_var = Vec::Ones(channels);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  if (x.c != channels_) throw ConfigError("batchnorm: channel mismatch");
  cached_mode_ = mode;
  norm_count_ = static_cast<long>(x.n) * x.h * x.w;
  const ConstMatMap xm = x.as_rows();
  if (mode == Mode::Train) {
    mean_ = xm.colwise().mean();
    Vec sq = (xm.rowwise() - mean_.transpose()).array().square().colwise().mean();
    inv_std_ = (sq.array() + eps_).sqrt().inverse();
    running_mean = (1.0 - momentum_) * running_mean + momentum_ * mean_;
    running_var = (1.0 - momentum_) * running_var + momentum_ * sq;
  } else {
    mean_ = running_mean;
    inv_std_ = (running_var.array() + eps_).sqrt().inverse();
  }
  xhat_ = Tensor(x.n, x.h, x.w, x.c);
  MatMap xh = xhat_.as_rows();
  xh = (xm.rowwise() - mean_.transpose()).array().rowwise() *
       inv_std_.transpose().array();
  Tensor y(x.n, x.h, x.w, x.c);
  MatMap ym = y.as_rows();
  ym = (xh.array().rowwise() * gamma.transpose().array()).rowwise() +
       beta.transpose().array();
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  const ConstMatMap dym = dy.as_rows();
  const MatMap xh = xhat_.as_rows();
  g_grad.noalias() += (dym.array() * xh.array()).colwise().sum().matrix().transpose();
  b_grad.noalias() += dym.colwise().sum().transpose();
  Tensor dx(dy.n, dy.h, dy.w, dy.c);
  MatMap dxm = dx.as_rows();
  if (cached_mode_ == Mode::Train) {
    // Batch statistics couple every sample in the normalization set.
    Vec mean_dy = dym.colwise().mean();
    Vec mean_dy_xh = (dym.array() * xh.array()).colwise().mean();
    dxm = ((dym.rowwise() - mean_dy.transpose()).array() -
           xh.array().rowwise() * mean_dy_xh.transpose().array())
              .rowwise() *
          (gamma.array() * inv_std_.array()).transpose();
  } else {
    dxm = dym.array().rowwise() * (gamma.array() * inv_std_.array()).transpose();
  }
  return dx;
}

void BatchNorm2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", gamma.data(), g_grad.data(),
                 static_cast<size_t>(gamma.size())});
  out.push_back({prefix + ".beta", beta.data(), b_grad.data(),
                 static_cast<size_t>(beta.size())});
  out.push_back({prefix + ".running_mean", running_mean.data(), nullptr,
                 static_cast<size_t>(running_mean.size())});
  out.push_back({prefix + ".running_var", running_var.data(), nullptr,
                 static_cast<size_t>(running_var.size())});
}

void BatchNorm2d::zero_grad() {
  g_grad.setZero();
  b_grad.setZero();
}

Tensor Elu::forward(const Tensor& x) {
  y_ = Tensor(x.n, x.h, x.w, x.c);
  for (size_t i = 0; i < x.data.size(); ++i)
    y_.data[i] = x.data[i] > 0.0 ? x.data[i] : std::expm1(x.data[i]);
  return y_;
}

Tensor Elu::backward(const Tensor& dy) const {
  Tensor dx = Tensor::zeros_like(dy);
  for (size_t i = 0; i < dy.data.size(); ++i)
    dx.data[i] = y_.data[i] > 0.0 ? dy.data[i] : dy.data[i] * (y_.data[i] + 1.0);
  return dx;
}

RowMat GlobalPool::forward(const Tensor& x) {
  n_ = x.n;
  h_ = x.h;
  w_ = x.w;
  c_ = x.c;
  RowMat v(x.n, x.c);
  if (kind_ == PoolKind::GlobalMax) {
    argmax_.assign(static_cast<size_t>(x.n) * x.c, 0);
    for (int i = 0; i < x.n; ++i) {
      for (int ch = 0; ch < x.c; ++ch) {
        double best = -std::numeric_limits<double>::infinity();
        int best_pos = 0;
        for (int y = 0; y < x.h; ++y) {
          for (int xx = 0; xx < x.w; ++xx) {
            const double val = x.at(i, y, xx, ch);
            if (val > best) {
              best = val;
              best_pos = y * x.w + xx;
            }
          }
        }
        v(i, ch) = best;
        argmax_[static_cast<size_t>(i) * x.c + ch] = best_pos;
      }
    }
  } else {
    for (int i = 0; i < x.n; ++i) {
      for (int ch = 0; ch < x.c; ++ch) {
        double sum = 0.0;
        for (int y = 0; y < x.h; ++y)
          for (int xx = 0; xx < x.w; ++xx) sum += x.at(i, y, xx, ch);
        v(i, ch) = sum / (static_cast<double>(x.h) * x.w);
      }
    }
  }
  return v;
}

Tensor GlobalPool::backward(const RowMat& dv) const {
  Tensor dx(n_, h_, w_, c_);
  if (kind_ == PoolKind::GlobalMax) {
    for (int i = 0; i < n_; ++i) {
      for (int ch = 0; ch < c_; ++ch) {
        const int pos = argmax_[static_cast<size_t>(i) * c_ + ch];
        dx.at(i, pos / w_, pos % w_, ch) = dv(i, ch);
      }
    }
  } else {
    const double inv = 1.0 / (static_cast<double>(h_) * w_);
    for (int i = 0; i < n_; ++i)
      for (int ch = 0; ch < c_; ++ch) {
        const double g = dv(i, ch) * inv;
        for (int y = 0; y < h_; ++y)
          for (int xx = 0; xx < w_; ++xx) dx.at(i, y, xx, ch) = g;
      }
  }
  return dx;
}

Linear::Linear(int in_dim, int out_dim) : in_dim_(in_dim), out_dim_(out_dim) {
  weight = RowMat::Zero(out_dim, in_dim);
  w_grad = RowMat::Zero(out_dim, in_dim);
  bias = Vec::Zero(out_dim);
  b_grad = Vec::Zero(out_dim);
}

RowMat Linear::forward(const RowMat& x) {
  if (x.cols() != in_dim_)
    throw ConfigError("linear: input width " + std::to_string(x.cols()) +
                      " does not match layer width " + std::to_string(in_dim_));
  x_ = x;
  RowMat y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

RowMat Linear::backward(const RowMat& dy) {
  w_grad.noalias() += dy.transpose() * x_;
  b_grad.noalias() += dy.colwise().sum().transpose();
  return dy * weight;
}

void Linear::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", weight.data(), w_grad.data(),
                 static_cast<size_t>(weight.size())});
  out.push_back({prefix + ".bias", bias.data(), b_grad.data(),
                 static_cast<size_t>(bias.size())});
}

void Linear::zero_grad() {
  w_grad.setZero();
  b_grad.setZero();
}

double cross_entropy(const RowMat& logits, const std::vector<int>& targets,
                     RowMat* dlogits) {
  const long n = logits.rows();
  if (n == 0) throw ValidationError("cross_entropy: empty batch");
  if (static_cast<long>(targets.size()) != n)
    throw ValidationError("cross_entropy: target count mismatch");
  double loss = 0.0;
  if (dlogits) dlogits->resize(n, logits.cols());
  for (long i = 0; i < n; ++i) {
    const double m = logits.row(i).maxCoeff();
    const Eigen::ArrayXd ex = (logits.row(i).array() - m).exp();
    const double z = ex.sum();
    loss += std::log(z) + m - logits(i, targets[i]);
    if (dlogits) {
      dlogits->row(i) = (ex / z).matrix() / static_cast<double>(n);
      (*dlogits)(i, targets[i]) -= 1.0 / static_cast<double>(n);
    }
  }
  return loss / static_cast<double>(n);
}

int argmax_row(const RowMat& scores, int row) {
  int best = 0;
  for (int k = 1; k < scores.cols(); ++k)
    if (scores(row, k) > scores(row, best)) best = k;
  return best;
}

void kaiming_init(RowMat& w, int fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (long i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
}

}  // namespace fairgrain::nn
