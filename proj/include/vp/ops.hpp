// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "vp/tensor.hpp"

namespace vp {

// Elementwise. Binary ops require identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real factor);
Tensor abs(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor leaky_relu(const Tensor& a, real slope);

// Reductions to a scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Structural.
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);  // rank-2 only
/// Concatenates along the last axis; all leading extents must agree.
Tensor concat_lastdim(const std::vector<Tensor>& parts);
/// Adds a vector of length shape.back() to every last-axis slice.
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);

/// Max-subtracted softmax over the last axis.
Tensor softmax_lastdim(const Tensor& x);

/// x / (||x|| + eps) over the last axis.
Tensor normalize_lastdim(const Tensor& x, real eps = real(1e-12));

/// a.b / ((||a|| + eps)(||b|| + eps)) for two vectors of equal length.
Tensor cosine_sim(const Tensor& a, const Tensor& b, real eps = real(1e-12));

/// Zero-padded 2-D convolution of an H x W x Cin map with a Cout x Cin x k x k
/// kernel. k must be odd.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad);

/// Adjoint of conv2d. Kernel layout Cin x Cout x k x k; output extent
/// (H - 1) * stride - 2 * pad + k + output_pad.
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel, int stride, int pad, int output_pad);

/// Spatially varying convolution: every pixel (u, v) of the H x W x C map is
/// filtered with its own kernel filters[u, v] of shape Cout x C x k x k,
/// centred on the pixel, zero padding outside the map.
Tensor dynamic_filter(const Tensor& input, const Tensor& filters);

/// Per-channel variant: filters are H x W x C x k x k.
Tensor dynamic_filter_depthwise(const Tensor& input, const Tensor& filters);

/// Backward difference of an H x W x C map along height (axis 0) or width
/// (axis 1), restricted to pixels with u >= 1 and v >= 1. Output is
/// (H - 1) x (W - 1) x C.
Tensor backward_diff(const Tensor& input, int axis);

/// Records the branch taken by every non-differentiable point (abs, leaky
/// relu) evaluated on this thread while alive. Two evaluations with equal
/// signatures lie on the same smooth piece of the function.
class KinkTracer {
 public:
  KinkTracer();
  ~KinkTracer();
  KinkTracer(const KinkTracer&) = delete;
  KinkTracer& operator=(const KinkTracer&) = delete;

  const std::vector<std::int8_t>& signature() const { return signs_; }
  void clear() { signs_.clear(); }

  static void record(real value);
  static bool active();

 private:
  KinkTracer* previous_;
  std::vector<std::int8_t> signs_;
};

namespace debug {
/// Test hook: perturbs the conv2d and dynamic_filter backward passes so that
/// gradient checking has a negative control.
void set_corrupt_backward(bool enabled);
bool corrupt_backward();
}  // namespace debug

}  // namespace vp
