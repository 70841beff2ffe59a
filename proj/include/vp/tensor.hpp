// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vp {

#ifdef VP_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
struct TensorImpl;

/// Backward closure of a recorded op. `out` carries the op's forward value and
/// the gradient flowing into it; the closure accumulates into the op inputs.
using BackwardFn = std::function<void(const TensorImpl& out)>;

struct Node {
  const char* name = "";
  std::vector<Tensor> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves
};

/// Dense row-major n-dimensional array with an optional gradient slot.
///
/// Tensor is a shared handle: copies alias the same storage, which is how
/// parameters are shared between a model and the graphs built from it. Use
/// detach() for an independent deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = real(0));
  Tensor(Shape shape, std::vector<real> values);

  static Tensor scalar(real value);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<real> data();
  std::span<const real> data() const;
  real item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const real> grad() const;
  /// Gradient buffer, allocated as zeros on first access.
  std::span<real> mutable_grad();
  void zero_grad();

  /// Deep copy of the values, detached from any graph.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate.
  void backward() const;

  TensorImpl& impl() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(const char*, Shape, std::vector<real>, std::vector<Tensor>, BackwardFn);

  std::shared_ptr<TensorImpl> impl_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Wraps a freshly computed op output. A graph node is attached only when
/// recording is enabled and at least one input requires a gradient.
Tensor make_result(const char* name, Shape shape, std::vector<real> values,
                   std::vector<Tensor> inputs, BackwardFn backward);

/// Gradient buffer of `t` for accumulation inside a BackwardFn, or an empty
/// span when `t` does not take gradients.
std::span<real> grad_sink(const Tensor& t);

}  // namespace vp
