// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "vp/tensor.hpp"

namespace vp {

struct LossConfig {
  real lambda_g = real(0.01);
};

/// Mean absolute difference over all pixels and channels.
Tensor reconstruction_loss(const Tensor& pred, const Tensor& target);

/// Mean over pixels with u >= 1 and v >= 1 of
///   | |d_u target| - |d_u pred| | + | |d_v target| - |d_v pred| |
/// where d_u, d_v are backward differences along height and width.
Tensor gradient_loss(const Tensor& pred, const Tensor& target);

/// reconstruction_loss + lambda_g * gradient_loss.
Tensor total_loss(const Tensor& pred, const Tensor& target, const LossConfig& config);

}  // namespace vp
