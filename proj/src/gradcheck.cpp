// SPDX-License-Identifier: Apache-2.0
#include "vp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vp/errors.hpp"
#include "vp/ops.hpp"
#include "vp/random.hpp"

namespace vp {

GradCheckResult finite_diff_check(const ScalarFn& f, Tensor x, const GradCheckOptions& options) {
  if (!x.is_leaf()) throw std::invalid_argument("finite_diff_check: x must be a leaf tensor");

  const bool was_tracking = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tensor y = f(x);
    if (y.numel() != 1) throw ShapeError("finite_diff_check: f must return a scalar");
    y.backward();
  }
  std::vector<real> analytic(x.numel(), real(0));
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  x.set_requires_grad(was_tracking);

  std::vector<std::size_t> coords(x.numel());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coordinates > 0 && options.max_coordinates < coords.size()) {
    std::vector<std::size_t> picked;
    Rng rng(options.sample_seed);
    std::sample(coords.begin(), coords.end(), std::back_inserter(picked), options.max_coordinates, rng);
    coords = std::move(picked);
  }

  const real eps = options.eps;
  GradCheckResult result;
  NoGradGuard no_grad;
  auto values = x.data();
  for (std::size_t i : coords) {
    const real original = values[i];
    KinkTracer tracer;
    std::optional<std::vector<std::int8_t>> branches;
    bool crossed = false;
    auto probe = [&](real offset) {
      tracer.clear();
      values[i] = original + offset;
      const double v = f(x).item();
      if (!branches) {
        branches = tracer.signature();
      } else if (tracer.signature() != *branches) {
        crossed = true;
      }
      return v;
    };
    double central = 0;
    if (options.five_point) {
      const double p2 = probe(2 * eps), p1 = probe(eps), m1 = probe(-eps), m2 = probe(-2 * eps);
      central = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * static_cast<double>(eps));
    } else {
      const double p1 = probe(eps), m1 = probe(-eps);
      central = (p1 - m1) / (2.0 * static_cast<double>(eps));
    }
    values[i] = original;
    if (crossed) {
      ++result.skipped_at_kinks;
      continue;
    }
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(central), options.floor});
    const double rel = std::abs(a - central) / denom;
    ++result.checked;
    if (rel > result.max_relative_error || std::isnan(rel)) {
      result.max_relative_error = std::isnan(rel) ? INFINITY : rel;
      result.worst_index = i;
    }
  }
  return result;
}

GradCheckResult finite_diff_check(const ScalarFn& f, Tensor x, real eps) {
  GradCheckOptions options;
  options.eps = eps;
  return finite_diff_check(f, std::move(x), options);
}

}  // namespace vp
