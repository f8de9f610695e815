#pragma once

#include <cstdint>
#include <vector>

#include "saad/tensor.hpp"

/// Differentiable operators. Every backward rule is itself written with these
/// operators, so gradients can be differentiated again (needed by the
/// gradient penalty) for all ops except bce_prob.
namespace saad::ops {

Tensor zeros_like(const Tensor& x);
Tensor ones_like(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// Elementwise. Shapes must match exactly; only scalar broadcast is offered.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double s);
Tensor scale(const Tensor& x, double s);
/// s - x
Tensor rsub_scalar(double s, const Tensor& x);
Tensor square(const Tensor& x);

enum class Activation { relu, leaky_relu, sigmoid };

Tensor relu(const Tensor& x);
/// alpha must lie in (0, 1).
Tensor leaky_relu(const Tensor& x, double alpha);
Tensor sigmoid(const Tensor& x);
Tensor activation(const Tensor& x, Activation kind, double alpha = 0.2);

// Reductions and their adjoint broadcasts.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor expand_scalar(const Tensor& s, const Shape& shape);
/// [N, ...] -> [N]
Tensor sum_per_sample(const Tensor& x);
Tensor mean_per_sample(const Tensor& x);
Tensor expand_per_sample(const Tensor& v, const Shape& shape);
/// [N,1,H,W] -> [N,C,H,W]
Tensor repeat_channels(const Tensor& x, int64_t channels);
/// [N,C,H,W] -> [N,1,H,W]
Tensor sum_channels(const Tensor& x);
/// [N,C,H,W] -> [C]
Tensor reduce_to_channels(const Tensor& x);
/// [C] -> shape, with shape[1] == C
Tensor broadcast_channels(const Tensor& b, const Shape& shape);

struct MaskedReduceInfo {
  bool degenerate = false;  ///< mask selected no pixel
  int64_t selected = 0;     ///< selected elements (pixels x channels)
};

/// Sum of x over pixels where mask == 1, all channels. mask is [N,1,H,W].
Tensor masked_sum(const Tensor& x, const Tensor& mask);
/// masked_sum divided by the selected element count; 0 for an empty mask.
Tensor masked_mean(const Tensor& x, const Tensor& mask, MaskedReduceInfo* info = nullptr);

// Channel-axis structure.
Tensor concat_channels(const std::vector<Tensor>& inputs);
Tensor slice_channels(const Tensor& x, int64_t start, int64_t count);
/// Embeds x at channel offset `start` in a zero tensor with `total` channels.
Tensor pad_channels(const Tensor& x, int64_t start, int64_t total);

// Spatial resampling.
Tensor upsample_nearest(const Tensor& x, int64_t factor);
/// Sum over non-overlapping factor x factor blocks (adjoint of upsample).
Tensor sum_pool(const Tensor& x, int64_t factor);

struct Conv2dParams {
  int64_t stride = 1;
  int64_t padding = 0;
  int64_t dilation = 1;
};

int64_t conv_output_size(int64_t in, int64_t kernel, const Conv2dParams& p);

/// Cross-correlation with zero padding. bias may be undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv2dParams& p);
/// Gradient of conv2d with respect to its input (a transposed convolution).
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, int64_t in_h,
                         int64_t in_w, const Conv2dParams& p);
/// Gradient of conv2d with respect to its weight.
Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, int64_t kernel_h,
                          int64_t kernel_w, const Conv2dParams& p);

/// Elementwise max(z,0) - z*t + log(1 + exp(-|z|)). The target receives no
/// gradient.
Tensor bce_with_logits(const Tensor& logits, const Tensor& target);
/// Elementwise BCE on probabilities clamped to [eps, 1-eps]. First order only.
Tensor bce_prob(const Tensor& prob, const Tensor& target, double eps = 1e-12);

/// While alive, ops with a kink (relu, leaky_relu, bce_prob clamping) fold
/// which side of it each input element falls on into a signature. Two
/// evaluations with equal signatures lie on the same linear piece. Nested
/// traces are not supported; the innermost one is active.
class KinkTrace {
 public:
  KinkTrace();
  ~KinkTrace();
  KinkTrace(const KinkTrace&) = delete;
  KinkTrace& operator=(const KinkTrace&) = delete;

  uint64_t signature() const { return signature_; }
  void fold(uint64_t word);

 private:
  KinkTrace* previous_;
  uint64_t signature_ = 0xcbf29ce484222325ULL;
};

/// GEMM precision used inside the convolution kernels. f64 is the reference;
/// f32 trades accuracy for speed and is never used by gradient checks.
enum class ComputePrecision { f64, f32 };
ComputePrecision compute_precision();
void set_compute_precision(ComputePrecision p);

class PrecisionGuard {
 public:
  explicit PrecisionGuard(ComputePrecision p);
  ~PrecisionGuard();
  PrecisionGuard(const PrecisionGuard&) = delete;
  PrecisionGuard& operator=(const PrecisionGuard&) = delete;

 private:
  ComputePrecision previous_;
};

}  // namespace saad::ops

namespace saad {

inline Tensor operator+(const Tensor& a, const Tensor& b) { return ops::add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return ops::sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return ops::mul(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return ops::add_scalar(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return ops::scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return ops::scale(a, s); }
inline Tensor operator-(double s, const Tensor& a) { return ops::rsub_scalar(s, a); }

}  // namespace saad
