// SPDX-License-Identifier: Apache-2.0
#include "rcf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace rcf {

std::string_view to_string(DType dtype) {
  return dtype == DType::f32 ? "f32" : "f64";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
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

namespace {

Storage make_storage(DType dtype, std::size_t n, double value = 0.0) {
  if (dtype == DType::f32)
    return Buffer<float>(n, static_cast<float>(value));
  return Buffer<double>(n, value);
}

void check_shape(const Shape& shape) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("zero extent in shape " + shape_str(shape));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(std::move(shape), 0.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  check_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data = make_storage(dtype, shape_numel(shape), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::span<const double> values, DType dtype) {
  if (shape_numel(shape) != values.size())
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  Tensor t = zeros(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto out = t.data<T>();
    for (std::size_t i = 0; i < values.size(); ++i)
      out[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values,
                    DType dtype) {
  return from(std::move(shape), std::span<const double>(values.begin(), values.size()),
              dtype);
}

Tensor Tensor::scalar(double value, DType dtype) { return full({1}, value, dtype); }

const Shape& Tensor::shape() const {
  if (!impl_) throw Error("undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

DType Tensor::dtype() const {
  if (!impl_) throw Error("undefined tensor");
  return std::holds_alternative<Buffer<float>>(impl_->data) ? DType::f32
                                                                 : DType::f64;
}

double Tensor::at(std::size_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v.at(i)); },
                    impl_->data);
}

double Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  return std::visit(
      [](const auto& v) { return std::vector<double>(v.begin(), v.end()); },
      impl_->data);
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.has_value(); }

Tensor Tensor::grad() const {
  Tensor g = zeros(shape(), dtype());
  if (impl_->grad) g.impl_->data = *impl_->grad;
  return g;
}

std::vector<double> Tensor::grad_vector() const { return grad().to_vector(); }

void Tensor::ensure_grad() {
  if (!impl_->grad) impl_->grad = make_storage(dtype(), numel());
}

void Tensor::zero_grad() {
  if (!impl_->grad) return;
  std::visit([](auto& v) { std::fill(v.begin(), v.end(), 0); }, *impl_->grad);
}

void Tensor::drop_grad() { impl_->grad.reset(); }

Tensor Tensor::clone() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->requires_grad = impl_->requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return clone();
  Tensor out = zeros(shape(), target);
  std::visit(
      [&](const auto& src) {
        dispatch(target, [&](auto tag) {
          using T = decltype(tag);
          auto dst = out.data<T>();
          for (std::size_t i = 0; i < src.size(); ++i)
            dst[i] = static_cast<T>(src[i]);
        });
      },
      impl_->data);
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

Tensor Tensor::reshaped(Shape new_shape) const {
  if (shape_numel(new_shape) != numel())
    throw ShapeError("cannot reshape " + shape_str(shape()) + " to " +
                     shape_str(new_shape));
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(new_shape);
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

bool Tensor::all_finite() const {
  return std::visit(
      [](const auto& v) {
        return std::all_of(v.begin(), v.end(),
                           [](auto x) { return std::isfinite(x); });
      },
      impl_->data);
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape() != other.shape() || dtype() != other.dtype()) return false;
  return std::visit(
      [&](const auto& a) {
        using V = std::decay_t<decltype(a)>;
        const auto& b = std::get<V>(other.impl_->data);
        return std::memcmp(a.data(), b.data(),
                           a.size() * sizeof(typename V::value_type)) == 0;
      },
      impl_->data);
}

}  // namespace rcf
