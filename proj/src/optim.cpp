// SPDX-License-Identifier: Apache-2.0
#include "vp/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "vp/errors.hpp"

namespace vp {

void adam_step(std::span<NamedParameter> params, OptimState& state, real lr) {
  if (state.moments.empty()) {
    for (const auto& p : params) {
      state.moments.push_back({p.name, std::vector<real>(p.value.numel(), 0), std::vector<real>(p.value.numel(), 0)});
    }
  }
  if (state.moments.size() != params.size()) {
    throw std::logic_error("adam_step: optimizer state tracks a different parameter set");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.moments[i].name != params[i].name || state.moments[i].first.size() != params[i].value.numel()) {
      throw std::logic_error("adam_step: optimizer state does not match parameter " + params[i].name);
    }
    for (std::size_t j = 0; j < params[i].value.grad().size(); ++j) {
      if (!std::isfinite(params[i].value.grad()[j])) {
        throw NumericError("adam_step: non-finite gradient in " + params[i].name + " at index " + std::to_string(j));
      }
    }
  }

  state.step += 1;
  const AdamConfig& c = state.adam;
  const real t = static_cast<real>(state.step);
  const real bc1 = 1 - std::pow(c.beta1, t);
  const real bc2 = 1 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].value.data();
    auto grad = params[i].value.grad();
    auto& m = state.moments[i].first;
    auto& v = state.moments[i].second;
    for (std::size_t j = 0; j < value.size(); ++j) {
      const real g = grad.empty() ? real(0) : grad[j];
      m[j] = c.beta1 * m[j] + (1 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1 - c.beta2) * g * g;
      value[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + c.eps);
    }
  }
}

real cosine_anneal_lr(std::uint32_t epoch, const OptimState& state) {
  if (epoch > state.total_epochs) {
    throw std::out_of_range("cosine_anneal_lr: epoch " + std::to_string(epoch) + " past schedule end " +
                            std::to_string(state.total_epochs));
  }
  if (state.total_epochs == 0) return state.lr_max;
  const real phase = std::numbers::pi_v<real> * static_cast<real>(epoch) / static_cast<real>(state.total_epochs);
  return state.lr_min + real(0.5) * (state.lr_max - state.lr_min) * (1 + std::cos(phase));
}

}  // namespace vp
