// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "vp/tensor.hpp"

namespace vp {

struct GradCheckResult {
  /// max over checked coordinates of |analytic - central| / max(|analytic|, |central|, floor)
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose +/- eps probes landed on different branches of an abs
  /// or leaky-relu; a central difference across a kink is not a derivative.
  std::size_t skipped_at_kinks = 0;
  std::size_t worst_index = 0;
};

using ScalarFn = std::function<Tensor(const Tensor&)>;

struct GradCheckOptions {
  real eps = real(1e-5);
  /// Probe at most this many coordinates, drawn without replacement from
  /// `sample_seed` (0 = probe all).
  std::size_t max_coordinates = 0;
  std::uint64_t sample_seed = 0;
  /// Denominator floor of the relative error.
  double floor = 1e-8;
  /// Five-point (fourth-order) stencil instead of the plain central difference.
  bool five_point = false;
};

/// Compares the reverse-mode gradient of f at x with central differences.
///
/// x must be a leaf. Its storage is perturbed in place and restored after
/// every probe, so f may read x through an aliasing handle (for example a
/// model parameter) instead of through its argument.
GradCheckResult finite_diff_check(const ScalarFn& f, Tensor x, const GradCheckOptions& options);
GradCheckResult finite_diff_check(const ScalarFn& f, Tensor x, real eps = real(1e-5));

}  // namespace vp
