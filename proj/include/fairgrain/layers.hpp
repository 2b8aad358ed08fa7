#pragma once

#include <string>
#include <vector>

#include "fairgrain/tensor.hpp"

namespace fairgrain::nn {

enum class Mode { Train, Eval };

/// Named view of one parameter (or state buffer) inside a layer. Pointers
/// stay valid for the lifetime of the owning model.
struct ParamRef {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;  // null for non-trainable state (running stats)
  size_t count = 0;
};

/// 2D convolution, NHWC, square kernel, implemented as im2col + GEMM.
class Conv2d {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, bool bias = true);

  Tensor forward(const Tensor& x);
  /// Consumes the cache from the last forward; accumulates into w_grad/b_grad.
  Tensor backward(const Tensor& dy);

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
  void zero_grad();

  int out_size(int in) const { return (in + 2 * pad_ - kernel_) / stride_ + 1; }

  int in_ch() const { return in_ch_; }
  int out_ch() const { return out_ch_; }

  RowMat weight;  // (kernel*kernel*in_ch) x out_ch
  Vec bias;
  RowMat w_grad;
  Vec b_grad;
  bool has_bias;

 private:
  int in_ch_, out_ch_, kernel_, stride_, pad_;
  RowMat cols_;  // cached im2col of last input
  int cached_n_ = 0, cached_h_ = 0, cached_w_ = 0;
};

/// Per-channel batch normalization over (batch, height, width).
class BatchNorm2d {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
  void zero_grad();

  Vec gamma, beta, g_grad, b_grad;
  Vec running_mean, running_var;

 private:
  int channels_;
  double eps_, momentum_;
  Mode cached_mode_ = Mode::Train;
  Vec mean_, inv_std_;  // statistics used by the cached forward
  Tensor xhat_;
  long norm_count_ = 0;
};

/// Exponential linear unit, alpha = 1.
class Elu {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor y_;
};

enum class PoolKind { GlobalMax, GlobalAvg };

/// Global spatial pooling to a per-image descriptor row.
class GlobalPool {
 public:
  explicit GlobalPool(PoolKind kind) : kind_(kind) {}

  /// x: [n,h,w,c] -> descriptors [n,c].
  RowMat forward(const Tensor& x);
  Tensor backward(const RowMat& dv) const;

  PoolKind kind() const { return kind_; }

 private:
  PoolKind kind_;
  std::vector<int> argmax_;  // flat (y*w+x) winner per (n,c), max pooling only
  int n_ = 0, h_ = 0, w_ = 0, c_ = 0;
};

/// Fully connected layer on row vectors: y = x W^T + b.
class Linear {
 public:
  Linear(int in_dim, int out_dim);

  RowMat forward(const RowMat& x);
  RowMat backward(const RowMat& dy);

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
  void zero_grad();

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }

  RowMat weight;  // out_dim x in_dim
  Vec bias;
  RowMat w_grad;
  Vec b_grad;

 private:
  int in_dim_, out_dim_;
  RowMat x_;
};

/// Mean softmax cross-entropy over a batch of logit rows.
/// Returns the loss; if dlogits is non-null it receives d(loss)/d(logits).
double cross_entropy(const RowMat& logits, const std::vector<int>& targets,
                     RowMat* dlogits);

/// Argmax with ties resolved to the lowest index.
int argmax_row(const RowMat& scores, int row);

void kaiming_init(RowMat& w, int fan_in, Rng& rng);

}  // namespace fairgrain::nn
