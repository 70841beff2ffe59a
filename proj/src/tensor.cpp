// SPDX-License-Identifier: Apache-2.0
#include "vp/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

#include "vp/errors.hpp"

namespace vp {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, real fill) : impl_(std::make_shared<TensorImpl>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<real> values) : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(real value) { return Tensor(Shape{}, std::vector<real>{value}); }

TensorImpl& Tensor::impl() const {
  if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("Tensor::dim: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

std::span<real> Tensor::data() { return impl().data; }
std::span<const real> Tensor::data() const { return impl().data; }

real Tensor::item() const {
  if (numel() != 1) throw ShapeError("Tensor::item: tensor " + shape_str(shape()) + " is not a scalar");
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad: only leaf tensors can change this flag");
  impl().requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return impl().node == nullptr; }

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::span<const real> Tensor::grad() const { return impl().grad; }

std::span<real> Tensor::mutable_grad() {
  TensorImpl& t = impl();
  if (t.grad.empty()) t.grad.assign(t.data.size(), real(0));
  return t.grad;
}

void Tensor::zero_grad() {
  TensorImpl& t = impl();
  std::fill(t.grad.begin(), t.grad.end(), real(0));
}

Tensor Tensor::detach() const { return Tensor(shape(), impl().data); }

void Tensor::backward() const {
  TensorImpl& root = impl();
  if (root.data.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) return;

  // Post-order DFS over the graph gives a deterministic topological order.
  std::vector<TensorImpl*> order;
  std::unordered_set<const TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack{{&root, 0}};
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [cur, next] = stack.back();
    if (cur->node && next < cur->node->inputs.size()) {
      TensorImpl* child = &cur->node->inputs[next++].impl();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(cur);
      stack.pop_back();
    }
  }

  if (root.grad.empty()) root.grad.assign(1, real(0));
  root.grad[0] += real(1);

  // The graph is consumed. Detached nodes keep their inputs alive until the
  // sweep ends, since later entries of `order` may be owned only by them.
  std::vector<std::shared_ptr<Node>> consumed;
  consumed.reserve(order.size());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    if (!t->node) continue;
    if (!t->grad.empty()) t->node->backward(*t);
    consumed.push_back(std::move(t->node));
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(const char* name, Shape shape, std::vector<real> values, std::vector<Tensor> inputs,
                   BackwardFn backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor& in : inputs) any = any || in.requires_grad();
    if (any) {
      impl->requires_grad = true;
      impl->node = std::make_shared<Node>(Node{name, std::move(inputs), std::move(backward)});
    }
  }
  return Tensor(std::move(impl));
}

std::span<real> grad_sink(const Tensor& t) {
  TensorImpl& impl = t.impl();
  if (!impl.requires_grad) return {};
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), real(0));
  return impl.grad;
}

}  // namespace vp
