// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "vp/random.hpp"
#include "vp/tensor.hpp"

namespace vp {

/// Learnable N x C memory matrix. Rows are prototype feature vectors; the
/// forward pass never renormalizes them.
struct MemoryBank {
  Tensor items;

  std::size_t size() const { return items.dim(0); }
  std::size_t channels() const { return items.dim(1); }

  /// i.i.d. normal entries with standard deviation 1/sqrt(C).
  static MemoryBank random(std::size_t items, std::size_t channels, Rng& rng);
};

/// H x W x N soft addressing weights; every pixel slice is a probability vector.
struct AddressWeights {
  Tensor w;
};

/// H x W x C memory readout, a per-pixel convex combination of memory rows.
struct AggregatedMemory {
  Tensor m_hat;
};

/// Per-pixel linear map (a 1x1 convolution) from memory features to kernels.
struct FilterGenerator {
  Tensor weights;  // C x P
  Tensor bias;     // P
  std::size_t filter_out = 0;
  std::size_t filter_in = 0;
  std::size_t kernel_size = 0;
  bool depthwise = false;

  /// P: Cout*Cin*k*k for full kernels, C*k*k for depthwise ones.
  std::size_t kernel_numel() const;

  /// Weights drawn from normal(0, weight_std); bias set to the delta kernel so
  /// that filtering starts out as the identity map.
  static FilterGenerator delta_init(std::size_t channels, std::size_t kernel_size, bool depthwise, real weight_std,
                                    Rng& rng);
};

/// H x W x Cout x Cin x k x k (or H x W x C x k x k when depthwise).
struct DynamicFilterField {
  Tensor filters;
  bool depthwise = false;
};

/// Delta kernel pattern flattened to the generator's output layout.
Tensor delta_kernel(std::size_t channels, std::size_t kernel_size, bool depthwise);

/// w[u, v, :] = softmax_i cos(Z[u, v, :], m_i).
AddressWeights address_memory(const Tensor& z, const MemoryBank& memory);

/// m_hat[u, v, :] = sum_i w[u, v, i] m_i.
AggregatedMemory read_memory(const AddressWeights& weights, const MemoryBank& memory);

DynamicFilterField generate_filters(const AggregatedMemory& memory, const FilterGenerator& generator);

/// Filters a feature map with a field of per-pixel kernels.
Tensor apply_filters(const Tensor& features, const DynamicFilterField& field);

}  // namespace vp
