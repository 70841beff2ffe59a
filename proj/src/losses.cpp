// SPDX-License-Identifier: Apache-2.0
#include "vp/losses.hpp"

#include "vp/errors.hpp"
#include "vp/ops.hpp"

namespace vp {

namespace {
void require_frames(const char* op, const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + shape_str(pred.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
}
}  // namespace

Tensor reconstruction_loss(const Tensor& pred, const Tensor& target) {
  require_frames("reconstruction_loss", pred, target);
  return mean(abs(sub(pred, target)));
}

Tensor gradient_loss(const Tensor& pred, const Tensor& target) {
  require_frames("gradient_loss", pred, target);
  if (pred.rank() != 3 || pred.dim(0) < 2 || pred.dim(1) < 2) {
    throw ShapeError("gradient_loss: frames must be at least 2x2, got " + shape_str(pred.shape()));
  }
  Tensor du = sub(abs(backward_diff(target, 0)), abs(backward_diff(pred, 0)));
  Tensor dv = sub(abs(backward_diff(target, 1)), abs(backward_diff(pred, 1)));
  return mean(add(abs(du), abs(dv)));
}

Tensor total_loss(const Tensor& pred, const Tensor& target, const LossConfig& config) {
  if (config.lambda_g < 0) throw ConfigError("total_loss: lambda_g must be >= 0");
  Tensor loss = reconstruction_loss(pred, target);
  if (config.lambda_g == 0) return loss;
  return add(loss, scale(gradient_loss(pred, target), config.lambda_g));
}

}  // namespace vp
