#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "attrnet/errors.hpp"

namespace attrnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major tensor with an optional gradient buffer.
///
/// Copies are shallow: two Tensor values constructed from one another share
/// data and gradient storage, which is how the autodiff graph and the
/// parameter maps refer to the same trainable weights. Use clone() for an
/// independent copy.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{}) : impl_(std::make_shared<Impl>()) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dims must be positive, got " + shape_string(shape));
    }
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<Impl>()) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dims must be positive, got " + shape_string(shape));
    }
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_string(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  /// Writable view; only initializers and the optimizer should use this.
  std::span<T> mutable_data() { return impl_->data; }
  const T* ptr() const { return impl_->data.data(); }
  T* mutable_ptr() { return impl_->data.data(); }

  T operator[](std::size_t i) const { return impl_->data[i]; }
  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool flag) {
    impl_->requires_grad = flag;
    return *this;
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  /// Gradient buffer, allocated as zeros on first access. Callable on
  /// const handles: gradient accumulation is the one mutation a shared
  /// tensor allows.
  std::span<T> grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(numel(), T{0});
    return impl_->grad;
  }
  void zero_grad() const {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T{0});
  }
  void drop_grad() { impl_->grad.clear(); }

  /// Deep copy of data; gradient is not copied.
  Tensor clone() const {
    Tensor out(impl_->shape, impl_->data);
    out.impl_->requires_grad = impl_->requires_grad;
    return out;
  }

  /// Same data, different shape; shares nothing with the source.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), impl_->data); }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(impl_->data.begin(), impl_->data.end());
    return Tensor<U>(impl_->shape, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(impl_->data.begin(), impl_->data.end(),
                       [](T v) { return std::isfinite(v); });
  }

  /// Identity of the underlying storage.
  const void* id() const noexcept { return impl_.get(); }
  bool same_as(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Elementwise bitwise-exact equality of shape and values.
template <class T>
bool exactly_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  auto da = a.data();
  auto db = b.data();
  return std::equal(da.begin(), da.end(), db.begin());
}

}  // namespace attrnet
