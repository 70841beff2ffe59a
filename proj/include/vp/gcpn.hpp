// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "vp/random.hpp"
#include "vp/tensor.hpp"

namespace vp {

/// Projections shared by every propagation step.
struct GcpnParams {
  Tensor w_theta;  // C x C
  Tensor w_phi;    // C x C
  Tensor w_g;      // C x C
  Tensor w_o;      // C x C
  std::size_t steps = 2;
  /// Upper bound on H*W; the (HW) x (HW) affinity is dense.
  std::size_t max_positions = 1024;

  std::size_t channels() const { return w_theta.dim(0); }

  static GcpnParams random(std::size_t channels, std::size_t steps, real projection_std, real output_std, Rng& rng);
};

/// Flattened (H*W) x C feature, row-major over (u, v).
struct PropagationState {
  Tensor h;
};

PropagationState flatten_positions(const Tensor& z);
Tensor unflatten_positions(const PropagationState& state, std::size_t height, std::size_t width);

/// One non-local step: softmax_rows((h W_theta)(h W_phi)^T) (h W_g).
/// The row-stochastic attention matrix is stored in *attention when given.
PropagationState propagate_step(const PropagationState& state, const GcpnParams& params,
                                Tensor* attention = nullptr);

/// Z + h^L W_o with h^0 = Z, iterated `params.steps` times.
Tensor propagate(const Tensor& z, const GcpnParams& params, std::vector<Tensor>* attention = nullptr);

}  // namespace vp
