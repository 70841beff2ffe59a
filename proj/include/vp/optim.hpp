// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vp/predictor.hpp"
#include "vp/tensor.hpp"

namespace vp {

struct AdamConfig {
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
};

struct MomentBuffers {
  std::string name;
  std::vector<real> first;
  std::vector<real> second;
};

struct OptimState {
  std::vector<MomentBuffers> moments;  // one entry per parameter, same order
  std::uint64_t step = 0;
  real lr_max = real(2e-4);
  real lr_min = real(0);
  std::uint32_t total_epochs = 30;
  AdamConfig adam;
};

/// One bias-corrected Adam update. Parameters without an accumulated gradient
/// are treated as having a zero gradient. Throws NumericError, naming the
/// parameter, when any gradient is NaN or infinite; nothing is modified then.
void adam_step(std::span<NamedParameter> params, OptimState& state, real lr);

/// lr_min + (lr_max - lr_min) (1 + cos(pi epoch / total_epochs)) / 2.
real cosine_anneal_lr(std::uint32_t epoch, const OptimState& state);

}  // namespace vp
