// SPDX-License-Identifier: Apache-2.0
#include "vp/gcpn.hpp"

#include <string>

#include "vp/errors.hpp"
#include "vp/ops.hpp"

namespace vp {

GcpnParams GcpnParams::random(std::size_t channels, std::size_t steps, real projection_std, real output_std,
                              Rng& rng) {
  if (channels == 0) throw ShapeError("GcpnParams: need C >= 1");
  if (steps == 0) throw ShapeError("GcpnParams: need at least one propagation step");
  GcpnParams p;
  p.w_theta = randn({channels, channels}, projection_std, rng);
  p.w_phi = randn({channels, channels}, projection_std, rng);
  p.w_g = randn({channels, channels}, projection_std, rng);
  p.w_o = randn({channels, channels}, output_std, rng);
  p.steps = steps;
  return p;
}

PropagationState flatten_positions(const Tensor& z) {
  if (z.rank() != 3) throw ShapeError("flatten_positions: expected H x W x C, got " + shape_str(z.shape()));
  return PropagationState{reshape(z, {z.dim(0) * z.dim(1), z.dim(2)})};
}

Tensor unflatten_positions(const PropagationState& state, std::size_t height, std::size_t width) {
  if (state.h.rank() != 2 || state.h.dim(0) != height * width) {
    throw ShapeError("unflatten_positions: state " + shape_str(state.h.shape()) + " is not " +
                     std::to_string(height) + "x" + std::to_string(width) + " positions");
  }
  return reshape(state.h, {height, width, state.h.dim(1)});
}

PropagationState propagate_step(const PropagationState& state, const GcpnParams& params, Tensor* attention) {
  const Tensor& h = state.h;
  const std::size_t C = params.channels();
  if (h.rank() != 2 || h.dim(1) != C) {
    throw ShapeError("propagate_step: state " + shape_str(h.shape()) + " does not have " + std::to_string(C) +
                     " channels");
  }
  Tensor query = matmul(h, params.w_theta);
  Tensor key = matmul(h, params.w_phi);
  Tensor affinity = softmax_lastdim(matmul(query, transpose(key)));
  if (attention) *attention = affinity;
  return PropagationState{matmul(affinity, matmul(h, params.w_g))};
}

Tensor propagate(const Tensor& z, const GcpnParams& params, std::vector<Tensor>* attention) {
  if (params.steps < 1) throw ShapeError("propagate: need at least one step");
  if (z.rank() != 3 || z.dim(2) != params.channels()) {
    throw ShapeError("propagate: feature " + shape_str(z.shape()) + " does not match GCPN channels " +
                     std::to_string(params.channels()));
  }
  const std::size_t H = z.dim(0), W = z.dim(1);
  if (H * W > params.max_positions) {
    throw ShapeError("propagate: " + std::to_string(H * W) + " positions exceed the dense-attention cap of " +
                     std::to_string(params.max_positions));
  }
  PropagationState initial = flatten_positions(z);
  PropagationState state = initial;
  if (attention) attention->clear();
  for (std::size_t l = 0; l < params.steps; ++l) {
    Tensor a;
    state = propagate_step(state, params, attention ? &a : nullptr);
    if (attention) attention->push_back(a);
  }
  Tensor enhanced = add(initial.h, matmul(state.h, params.w_o));
  return unflatten_positions(PropagationState{enhanced}, H, W);
}

}  // namespace vp
