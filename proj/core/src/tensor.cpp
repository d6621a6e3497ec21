// SPDX-License-Identifier: Apache-2.0
#include "gpcn/tensor.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <sstream>
#include <unordered_map>

namespace gpcn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e < 0) throw ValidationError("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(gpcn::numel(shape)), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  if (static_cast<std::int64_t>(data.size()) != gpcn::numel(shape)) {
    throw ValidationError("data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

std::int64_t Tensor::dim(int axis) const {
  const int n = ndim();
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) {
    throw ValidationError("axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw std::logic_error("mutable_data() on a non-leaf tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw ValidationError("item() requires a single-element tensor, got " + shape_str(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  if (static_cast<int>(index.size()) != ndim()) throw ValidationError("index rank mismatch");
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    const auto extent = impl_->shape[axis];
    if (i < 0 || i >= extent) throw ValidationError("index out of range on axis " + std::to_string(axis));
    flat = flat * extent + i;
    ++axis;
  }
  return impl_->data[static_cast<std::size_t>(flat)];
}

Tensor& Tensor::set_requires_grad(bool value) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad() on a non-leaf tensor");
  impl_->requires_grad = value;
  return *this;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

void Tensor::backward() const {
  if (impl_->data.size() != 1) {
    throw ValidationError("backward() requires a scalar root, got shape " + shape_str(shape()));
  }
  if (!impl_->requires_grad) return;

  // Iterative DFS post-order; a grey node seen again means a cycle.
  enum class Mark { kGrey, kBlack };
  std::unordered_map<TensorImpl*, Mark> marks;
  // Owning references keep intermediates alive while parent nodes release their inputs.
  std::vector<std::shared_ptr<TensorImpl>> order;
  struct Frame {
    std::shared_ptr<TensorImpl> t;
    std::size_t next;
  };
  std::vector<Frame> stack{{impl_, 0}};
  marks[impl_.get()] = Mark::kGrey;
  while (!stack.empty()) {
    auto& frame = stack.back();
    TensorImpl* t = frame.t.get();
    if (t->node && frame.next < t->node->inputs.size()) {
      const auto& child = t->node->inputs[frame.next++];
      if (!child->requires_grad) continue;
      auto it = marks.find(child.get());
      if (it == marks.end()) {
        marks[child.get()] = Mark::kGrey;
        stack.push_back({child, 0});
      } else if (it->second == Mark::kGrey) {
        throw std::logic_error("cycle detected in autodiff graph");
      }
      continue;
    }
    marks[t] = Mark::kBlack;
    order.push_back(std::move(frame.t));
    stack.pop_back();
  }

  impl_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = it->get();
    if (!t->node) continue;
    if (!t->grad.empty()) t->node->backward(*t);
    t->node.reset();
    t->grad.clear();
    t->grad.shrink_to_fit();
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

void configure_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

namespace detail {

Tensor make_result(Shape shape, std::vector<double> data, std::string_view op,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || wants_grad(in);
  }
  if (needs) {
    impl->requires_grad = true;
    auto node = std::make_shared<TapeNode>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) {
      if (in.defined()) node->inputs.push_back(in.impl());
    }
    node->backward = std::move(backward);
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

}  // namespace detail

}  // namespace gpcn
