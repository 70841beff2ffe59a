// SPDX-License-Identifier: Apache-2.0
#include "vp/lfmn.hpp"

#include <cmath>
#include <string>

#include "vp/errors.hpp"
#include "vp/ops.hpp"

namespace vp {

MemoryBank MemoryBank::random(std::size_t items, std::size_t channels, Rng& rng) {
  if (items == 0 || channels == 0) throw ShapeError("MemoryBank: need N >= 1 and C >= 1");
  const real stddev = real(1) / std::sqrt(static_cast<real>(channels));
  return MemoryBank{randn({items, channels}, stddev, rng)};
}

std::size_t FilterGenerator::kernel_numel() const {
  const std::size_t taps = kernel_size * kernel_size;
  return depthwise ? filter_in * taps : filter_out * filter_in * taps;
}

Tensor delta_kernel(std::size_t channels, std::size_t kernel_size, bool depthwise) {
  if (kernel_size % 2 == 0) throw ShapeError("delta_kernel: kernel size must be odd");
  const std::size_t taps = kernel_size * kernel_size;
  const std::size_t centre = (kernel_size / 2) * kernel_size + kernel_size / 2;
  if (depthwise) {
    Tensor t({channels * taps});
    for (std::size_t c = 0; c < channels; ++c) t.data()[c * taps + centre] = 1;
    return t;
  }
  Tensor t({channels * channels * taps});
  for (std::size_t c = 0; c < channels; ++c) t.data()[(c * channels + c) * taps + centre] = 1;
  return t;
}

FilterGenerator FilterGenerator::delta_init(std::size_t channels, std::size_t kernel_size, bool depthwise,
                                            real weight_std, Rng& rng) {
  FilterGenerator gen;
  gen.filter_out = channels;
  gen.filter_in = channels;
  gen.kernel_size = kernel_size;
  gen.depthwise = depthwise;
  gen.bias = delta_kernel(channels, kernel_size, depthwise);
  gen.weights = randn({channels, gen.kernel_numel()}, weight_std, rng);
  return gen;
}

AddressWeights address_memory(const Tensor& z, const MemoryBank& memory) {
  if (z.rank() != 3) throw ShapeError("address_memory: Z must be H x W x C, got " + shape_str(z.shape()));
  const std::size_t H = z.dim(0), W = z.dim(1), C = z.dim(2);
  if (memory.items.rank() != 2 || memory.channels() != C) {
    throw ShapeError("address_memory: channel mismatch between Z " + shape_str(z.shape()) + " and memory " +
                     shape_str(memory.items.shape()));
  }
  Tensor queries = normalize_lastdim(reshape(z, {H * W, C}));
  Tensor keys = normalize_lastdim(memory.items);
  Tensor similarity = matmul(queries, transpose(keys));
  return AddressWeights{reshape(softmax_lastdim(similarity), {H, W, memory.size()})};
}

AggregatedMemory read_memory(const AddressWeights& weights, const MemoryBank& memory) {
  const Tensor& w = weights.w;
  if (w.rank() != 3 || memory.items.rank() != 2 || w.dim(2) != memory.size()) {
    throw ShapeError("read_memory: weights " + shape_str(w.shape()) + " do not address memory " +
                     shape_str(memory.items.shape()));
  }
  const std::size_t H = w.dim(0), W = w.dim(1);
  Tensor flat = matmul(reshape(w, {H * W, memory.size()}), memory.items);
  return AggregatedMemory{reshape(flat, {H, W, memory.channels()})};
}

DynamicFilterField generate_filters(const AggregatedMemory& memory, const FilterGenerator& generator) {
  const Tensor& m = memory.m_hat;
  if (m.rank() != 3 || generator.weights.rank() != 2 || generator.weights.dim(0) != m.dim(2) ||
      generator.weights.dim(1) != generator.kernel_numel()) {
    throw ShapeError("generate_filters: generator " + shape_str(generator.weights.shape()) +
                     " cannot map features " + shape_str(m.shape()));
  }
  const std::size_t H = m.dim(0), W = m.dim(1), C = m.dim(2);
  const std::size_t k = generator.kernel_size;
  Tensor flat = add_bias(matmul(reshape(m, {H * W, C}), generator.weights), generator.bias);
  Shape shape = generator.depthwise ? Shape{H, W, generator.filter_in, k, k}
                                    : Shape{H, W, generator.filter_out, generator.filter_in, k, k};
  return DynamicFilterField{reshape(flat, std::move(shape)), generator.depthwise};
}

Tensor apply_filters(const Tensor& features, const DynamicFilterField& field) {
  return field.depthwise ? dynamic_filter_depthwise(features, field.filters) : dynamic_filter(features, field.filters);
}

}  // namespace vp
