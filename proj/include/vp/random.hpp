// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "vp/tensor.hpp"

namespace vp {

/// Independent, reproducible seed for a named stream (splitmix64 over an
/// FNV-1a hash of the name). Parameter groups draw from their own streams so
/// model variants that share a group also share its initial values.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

using Rng = std::mt19937_64;

/// i.i.d. normal(0, stddev) tensor.
Tensor randn(Shape shape, real stddev, Rng& rng);

/// i.i.d. uniform(lo, hi) tensor.
Tensor randu(Shape shape, real lo, real hi, Rng& rng);

}  // namespace vp
