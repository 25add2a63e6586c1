// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rcf/errors.hpp"

namespace rcf {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::string_view to_string(DType dtype);

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Allocates on 64-byte boundaries. Vectorized reductions peel a number of
/// leading elements that depends on the address, so with malloc alignment
/// the summation order (and the low bits of results) would vary between runs.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

/// Flat row-major buffer in one of the two supported precisions.
using Storage = std::variant<Buffer<float>, Buffer<double>>;

namespace detail {

template <typename T>
struct DTypeOf;
template <>
struct DTypeOf<float> {
  static constexpr DType value = DType::f32;
};
template <>
struct DTypeOf<double> {
  static constexpr DType value = DType::f64;
};

struct TensorImpl {
  Shape shape;
  Storage data;
  std::optional<Storage> grad;
  bool requires_grad = false;
};

}  // namespace detail

template <typename T>
inline constexpr DType dtype_of = detail::DTypeOf<T>::value;

/// Calls `fn(T{})` with T = float or double according to `dtype`.
template <typename Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::f32) return fn(float{});
  return fn(double{});
}

/**
 * Dense n-dimensional array with shared-handle semantics.
 *
 * Copies of a Tensor alias the same buffer; use clone() for a deep copy.
 * A tensor that requires_grad owns an optional gradient buffer of the same
 * shape, filled by Tape::backward().
 */
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor from(Shape shape, std::span<const double> values,
                     DType dtype = DType::f32);
  static Tensor from(Shape shape, std::initializer_list<double> values,
                     DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  DType dtype() const;

  template <typename T>
  std::span<T> data();
  template <typename T>
  std::span<const T> data() const;

  /// Element at flat index, widened to double.
  double at(std::size_t flat_index) const;
  double item() const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  bool has_grad() const;
  template <typename T>
  std::span<T> grad_data();
  template <typename T>
  std::span<const T> grad_data() const;
  /// Gradient copied into a fresh tensor (zeros when absent).
  Tensor grad() const;
  std::vector<double> grad_vector() const;
  /// Allocates a zeroed gradient buffer if missing.
  void ensure_grad();
  void zero_grad();
  void drop_grad();

  Tensor clone() const;
  Tensor to(DType dtype) const;
  /// Copy with a new shape; not recorded on any tape.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  bool bitwise_equal(const Tensor& other) const;

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& handle() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

template <typename T>
std::span<T> Tensor::data() {
  auto* v = std::get_if<Buffer<T>>(&impl_->data);
  if (v == nullptr) throw ShapeError("tensor dtype mismatch on data access");
  return {v->data(), v->size()};
}

template <typename T>
std::span<const T> Tensor::data() const {
  const auto* v = std::get_if<Buffer<T>>(&impl_->data);
  if (v == nullptr) throw ShapeError("tensor dtype mismatch on data access");
  return {v->data(), v->size()};
}

template <typename T>
std::span<T> Tensor::grad_data() {
  ensure_grad();
  auto& v = std::get<Buffer<T>>(*impl_->grad);
  return {v.data(), v.size()};
}

template <typename T>
std::span<const T> Tensor::grad_data() const {
  if (!impl_->grad) throw Error("tensor has no gradient");
  const auto& v = std::get<Buffer<T>>(*impl_->grad);
  return {v.data(), v.size()};
}

}  // namespace rcf
