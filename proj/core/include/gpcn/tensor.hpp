// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major f64 tensor with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap shared handle. Values produced by operations are never
// mutated afterwards; only leaves (parameters, inputs) expose mutable storage,
// and only the optimizer and initializers are expected to write through it.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gpcn {

using Shape = std::vector<std::int64_t>;

/// Raised for precondition violations on user-facing inputs (shape, config).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

/// One recorded operation. `backward` reads the output gradient and
/// accumulates into the gradients of `inputs` that require them.
struct TapeNode {
  std::string_view op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;  // null for leaves

  /// Returns the gradient buffer, allocating zeros on first use.
  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  /// Extent of axis `axis`; negative values count from the back.
  std::int64_t dim(int axis) const;
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<const double> data() const { return impl_->data; }
  /// Writable storage. Only valid on leaves.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const { return impl_->node == nullptr; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad();

  /// Reverse-mode sweep from a scalar root. Leaves accumulate gradients;
  /// the recorded graph is released afterwards.
  void backward() const;

  /// Same values, no history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
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

bool grad_mode_enabled();

/// Raises glibc's mmap/trim thresholds so that per-step tensor buffers are
/// recycled from the heap instead of being mapped and faulted in each time.
/// No effect on other C libraries.
void configure_allocator();

namespace detail {

/// Builds an op result. The node is attached only when grad mode is on and
/// at least one input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> data, std::string_view op,
                   std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward);

/// True when `t` participates in differentiation.
inline bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

/// Accumulation target for input `t`; call only when wants_grad(t).
inline std::vector<double>& grad_of(const Tensor& t) { return t.impl()->grad_buffer(); }

}  // namespace detail

}  // namespace gpcn
