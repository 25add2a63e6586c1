// SPDX-License-Identifier: Apache-2.0
#include "rcf/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rcf/branch_probe.hpp"
#include "rcf/tape.hpp"

namespace rcf {

namespace testing {

namespace {
thread_local Fault g_fault = Fault::none;
}

Fault active_fault() { return g_fault; }

ScopedFault::ScopedFault(Fault fault) : previous_(g_fault) { g_fault = fault; }
ScopedFault::~ScopedFault() { g_fault = previous_; }

}  // namespace testing

namespace detail {

namespace {
thread_local BranchProbe* g_probe = nullptr;
}

BranchProbe::BranchProbe() : previous_(g_probe) { g_probe = this; }
BranchProbe::~BranchProbe() { g_probe = previous_; }
BranchProbe* BranchProbe::active() { return g_probe; }

void BranchProbe::mix(std::uint64_t value) {
  // FNV-1a over the 8 bytes of value.
  for (int i = 0; i < 8; ++i) {
    hash_ ^= (value >> (8 * i)) & 0xffu;
    hash_ *= 1099511628211ull;
  }
}

}  // namespace detail

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype())
    throw ShapeError(std::string(op) + ": dtype mismatch (" +
                     std::string(to_string(a.dtype())) + " vs " +
                     std::string(to_string(b.dtype())) + ")");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_same_dtype(a, b, op);
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op,
                  const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": " + what + " must have rank " +
                     std::to_string(rank) + ", got " + shape_str(t.shape()));
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    throw NumericError(std::string(op) + ": non-finite value in output " +
                       shape_str(t.shape()));
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

enum class Binary { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
  require_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto o = out.data<T>();
    for (std::size_t i = 0; i < o.size(); ++i) {
      switch (kind) {
        case Binary::add: o[i] = x[i] + y[i]; break;
        case Binary::sub: o[i] = x[i] - y[i]; break;
        case Binary::mul: o[i] = x[i] * y[i]; break;
      }
    }
  });
  require_finite(out, name);
  if (should_record({&a, &b})) {
    Tape::active()->record({a, b}, out, [a = a, b = b, out, kind]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = std::as_const(out).grad_data<T>();
        if (a.requires_grad()) {
          auto ga = a.grad_data<T>();
          auto yb = std::as_const(b).data<T>();
          for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += kind == Binary::mul ? g[i] * yb[i] : g[i];
        }
        if (b.requires_grad()) {
          auto gb = b.grad_data<T>();
          auto xa = std::as_const(a).data<T>();
          for (std::size_t i = 0; i < g.size(); ++i) {
            switch (kind) {
              case Binary::add: gb[i] += g[i]; break;
              case Binary::sub: gb[i] -= g[i]; break;
              case Binary::mul: gb[i] += g[i] * xa[i]; break;
            }
          }
        }
      });
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto o = out.data<T>();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * static_cast<T>(factor);
  });
  require_finite(out, "scale");
  if (should_record({&a})) {
    Tape::active()->record({a}, out, [a = a, out, factor]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = std::as_const(out).grad_data<T>();
        auto ga = a.grad_data<T>();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * static_cast<T>(factor);
      });
    });
  }
  return out;
}

namespace {

Tensor reduce_sum(const Tensor& a, double factor) {
  Tensor out = Tensor::zeros({1}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double acc = 0.0;
    for (T v : a.data<T>()) acc += static_cast<double>(v);
    out.data<T>()[0] = static_cast<T>(acc * factor);
  });
  require_finite(out, "sum");
  if (should_record({&a})) {
    Tape::active()->record({a}, out, [a = a, out, factor]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T g = std::as_const(out).grad_data<T>()[0] * static_cast<T>(factor);
        for (T& v : a.grad_data<T>()) v += g;
      });
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce_sum(a, 1.0); }
Tensor mean(const Tensor& a) { return reduce_sum(a, 1.0 / static_cast<double>(a.numel())); }

Tensor activation(const Tensor& x, Activation kind) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    switch (kind) {
      case Activation::relu:
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < o.size(); ++i) {
          const T v = in[i];
          if (v >= T(0)) {
            o[i] = T(1) / (T(1) + std::exp(-v));
          } else {
            const T e = std::exp(v);
            o[i] = e / (T(1) + e);
          }
        }
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(in[i]);
        break;
    }
    if (kind == Activation::relu) {
      if (auto* probe = detail::BranchProbe::active()) {
        std::uint64_t word = 0;
        for (std::size_t i = 0; i < in.size(); ++i) {
          word = (word << 1) | (in[i] > T(0) ? 1u : 0u);
          if (i % 64 == 63) {
            probe->mix(word);
            word = 0;
          }
        }
        probe->mix(word);
      }
    }
  });
  require_finite(out, "activation");
  if (should_record({&x})) {
    Tape::active()->record({x}, out, [x = x, out, kind]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = std::as_const(out).grad_data<T>();
        auto y = std::as_const(out).data<T>();
        auto in = std::as_const(x).data<T>();
        auto gx = x.grad_data<T>();
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (kind) {
            case Activation::relu: gx[i] += in[i] > T(0) ? g[i] : T(0); break;
            case Activation::sigmoid: gx[i] += g[i] * y[i] * (T(1) - y[i]); break;
            case Activation::tanh: gx[i] += g[i] * (T(1) - y[i] * y[i]); break;
          }
        }
      });
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& weight,
              const std::optional<Tensor>& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  require_same_dtype(x, weight, "linear");
  const std::size_t n = x.dim(0), f = x.dim(1), g = weight.dim(1);
  if (weight.dim(0) != f)
    throw ShapeError("linear: input " + shape_str(x.shape()) +
                     " incompatible with weight " + shape_str(weight.shape()));
  if (bias) {
    require_same_dtype(x, *bias, "linear");
    if (bias->shape() != Shape{g})
      throw ShapeError("linear: bias " + shape_str(bias->shape()) +
                       " must have shape [" + std::to_string(g) + "]");
  }
  Tensor out = Tensor::zeros({n, g}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    ConstMapMat<T> X(x.data<T>().data(), n, f);
    ConstMapMat<T> W(weight.data<T>().data(), f, g);
    MapMat<T> Y(out.data<T>().data(), n, g);
    Y.noalias() = X * W;
    if (bias) {
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias->data<T>().data(), g);
      Y.rowwise() += b;
    }
  });
  require_finite(out, "linear");
  const Tensor* bias_ptr = bias ? &*bias : nullptr;
  if (should_record({&x, &weight, bias_ptr})) {
    std::vector<Tensor> inputs{x, weight};
    Tensor b = bias ? *bias : Tensor();
    if (bias) inputs.push_back(b);
    Tape::active()->record(std::move(inputs), out, [x = x, weight = weight, b, out, n, f, g]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        ConstMapMat<T> G(std::as_const(out).grad_data<T>().data(), n, g);
        if (x.requires_grad()) {
          ConstMapMat<T> W(std::as_const(weight).data<T>().data(), f, g);
          MapMat<T> GX(x.grad_data<T>().data(), n, f);
          GX.noalias() += G * W.transpose();
        }
        if (weight.requires_grad()) {
          ConstMapMat<T> X(std::as_const(x).data<T>().data(), n, f);
          MapMat<T> GW(weight.grad_data<T>().data(), f, g);
          if (testing::active_fault() == testing::Fault::linear_weight_grad)
            GW.noalias() += T(1.5) * (X.transpose() * G);
          else
            GW.noalias() += X.transpose() * G;
        }
        if (b.defined() && b.requires_grad()) {
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> GB(b.grad_data<T>().data(), g);
          GB += G.colwise().sum();
        }
      });
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace {

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, pad, out_h, out_w;
  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return out_h * out_w; }
  /// Images per GEMM so that the patch matrix stays near 1M elements.
  std::size_t chunk(std::size_t batch) const {
    const std::size_t per_image = col_rows() * col_cols();
    const std::size_t fit = (std::size_t{1} << 20) / std::max<std::size_t>(per_image, 1);
    return std::clamp<std::size_t>(fit, 1, batch);
  }
};

/// Output columns [lo, hi) whose input column ox·stride + kj − pad is inside
/// the image.
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t kj, const ConvGeometry& g) {
  const long w = static_cast<long>(g.width), pad = static_cast<long>(g.pad);
  const long st = static_cast<long>(g.stride), kk = static_cast<long>(kj);
  long lo = pad > kk ? (pad - kk + st - 1) / st : 0;
  long hi = (w - 1 + pad - kk) >= 0 ? (w - 1 + pad - kk) / st + 1 : 0;
  hi = std::min(hi, static_cast<long>(g.out_w));
  lo = std::min(lo, hi);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

/// Writes the patch matrix of one image into `col`, whose rows are `ld`
/// elements apart (ld >= out_h·out_w lets several images share one matrix).
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* col, std::size_t ld) {
  const std::size_t k = g.kernel;
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = img + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj, ++row) {
        T* dst = col + row * ld;
        const auto [lo, hi] = valid_range(kj, g);
        const long shift = static_cast<long>(kj) - static_cast<long>(g.pad);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          T* drow = dst + oy * g.out_w;
          if (iy < 0 || iy >= h) {
            std::fill(drow, drow + g.out_w, T(0));
            continue;
          }
          const T* srow = plane + iy * w;
          std::fill(drow, drow + lo, T(0));
          if (g.stride == 1) {
            std::copy(srow + static_cast<long>(lo) + shift, srow + static_cast<long>(hi) + shift,
                      drow + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox)
              drow[ox] = srow[static_cast<long>(ox * g.stride) + shift];
          }
          std::fill(drow + hi, drow + g.out_w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* img, std::size_t ld) {
  const std::size_t k = g.kernel;
  const long h = static_cast<long>(g.height), w = static_cast<long>(g.width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = img + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj, ++row) {
        const T* src = col + row * ld;
        const auto [lo, hi] = valid_range(kj, g);
        const long shift = static_cast<long>(kj) - static_cast<long>(g.pad);
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= h) continue;
          const T* srow = src + oy * g.out_w;
          T* drow = plane + iy * w;
          for (std::size_t ox = lo; ox < hi; ++ox)
            drow[static_cast<long>(ox * g.stride) + shift] += srow[ox];
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight,
              const std::optional<Tensor>& bias, std::size_t stride,
              std::size_t pad) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  require_same_dtype(x, weight, "conv2d");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t o = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != c)
    throw ShapeError("conv2d: input has " + std::to_string(c) +
                     " channels but weight " + shape_str(weight.shape()) +
                     " expects " + std::to_string(weight.dim(1)));
  if (weight.dim(3) != k)
    throw ShapeError("conv2d: kernel must be square, got " + shape_str(weight.shape()));
  if (h + 2 * pad < k || w + 2 * pad < k)
    throw ShapeError("conv2d: padded input " + shape_str(x.shape()) +
                     " smaller than kernel " + std::to_string(k));
  if (bias) {
    require_same_dtype(x, *bias, "conv2d");
    if (bias->shape() != Shape{o})
      throw ShapeError("conv2d: bias " + shape_str(bias->shape()) + " must have shape [" +
                       std::to_string(o) + "]");
  }
  const ConvGeometry geo{c, h, w, k, stride, pad, (h + 2 * pad - k) / stride + 1,
                         (w + 2 * pad - k) / stride + 1};
  Tensor out = Tensor::zeros({n, o, geo.out_h, geo.out_w}, x.dtype());

  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    ConstMapMat<T> W(weight.data<T>().data(), o, geo.col_rows());
    const std::size_t hw = geo.col_cols(), in_size = c * h * w, chunk = geo.chunk(n);
    RowMat<T> col(geo.col_rows(), hw * chunk);  // im2col writes every element
    RowMat<T> Y;
    const T* xin = x.data<T>().data();
    T* yout = out.data<T>().data();
    const T* bv = bias ? bias->data<T>().data() : nullptr;
    for (std::size_t s0 = 0; s0 < n; s0 += chunk) {
      const std::size_t nb = std::min(chunk, n - s0), ld = nb * hw;
      for (std::size_t j = 0; j < nb; ++j)
        im2col(xin + (s0 + j) * in_size, geo, col.data() + j * hw, ld);
      ConstMapMat<T> C(col.data(), geo.col_rows(), ld);
      Y.noalias() = W * C;
      for (std::size_t j = 0; j < nb; ++j)
        for (std::size_t oc = 0; oc < o; ++oc) {
          const T* src = Y.data() + oc * ld + j * hw;
          T* dst = yout + ((s0 + j) * o + oc) * hw;
          const T b0 = bv ? bv[oc] : T(0);
          for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + b0;
        }
    }
  });
  require_finite(out, "conv2d");

  const Tensor* bias_ptr = bias ? &*bias : nullptr;
  if (should_record({&x, &weight, bias_ptr})) {
    std::vector<Tensor> inputs{x, weight};
    Tensor b = bias ? *bias : Tensor();
    if (bias) inputs.push_back(b);
    Tape::active()->record(std::move(inputs), out, [x = x, weight = weight, b, out, geo, n, o]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const std::size_t hw = geo.col_cols(), in_size = geo.channels * geo.height * geo.width;
        const std::size_t chunk = geo.chunk(n);
        const T* gout = std::as_const(out).grad_data<T>().data();
        const T* xin = std::as_const(x).data<T>().data();
        ConstMapMat<T> W(std::as_const(weight).data<T>().data(), o, geo.col_rows());
        const bool need_w = weight.requires_grad();
        T* gx = x.requires_grad() ? x.grad_data<T>().data() : nullptr;
        T* gb = b.defined() && b.requires_grad() ? b.grad_data<T>().data() : nullptr;
        RowMat<T> col(need_w ? geo.col_rows() : 0, hw * chunk);
        RowMat<T> dW = RowMat<T>::Zero(o, geo.col_rows());
        RowMat<T> G, dcol;
        for (std::size_t s0 = 0; s0 < n; s0 += chunk) {
          const std::size_t nb = std::min(chunk, n - s0), ld = nb * hw;
          G.resize(o, ld);
          for (std::size_t j = 0; j < nb; ++j)
            for (std::size_t oc = 0; oc < o; ++oc)
              std::copy_n(gout + ((s0 + j) * o + oc) * hw, hw, G.data() + oc * ld + j * hw);
          if (need_w) {
            for (std::size_t j = 0; j < nb; ++j)
              im2col(xin + (s0 + j) * in_size, geo, col.data() + j * hw, ld);
            ConstMapMat<T> C(col.data(), geo.col_rows(), ld);
            dW.noalias() += G * C.transpose();
          }
          if (gx != nullptr) {
            dcol.noalias() = W.transpose() * G;
            for (std::size_t j = 0; j < nb; ++j)
              col2im_add(dcol.data() + j * hw, geo, gx + (s0 + j) * in_size, ld);
          }
          if (gb != nullptr)
            for (std::size_t oc = 0; oc < o; ++oc) gb[oc] += G.row(oc).sum();
        }
        if (need_w) {
          MapMat<T> GW(weight.grad_data<T>().data(), o, geo.col_rows());
          if (testing::active_fault() == testing::Fault::conv_weight_grad) dW *= T(1.5);
          GW += dW;
        }
      });
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

BatchNormState BatchNormState::init(std::size_t channels, DType dtype) {
  return {Tensor::zeros({channels}, dtype), Tensor::full({channels}, 1.0, dtype)};
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Mode mode, BatchNormState& state) {
  require_rank(x, 4, "batchnorm2d", "input");
  require_same_dtype(x, gamma, "batchnorm2d");
  require_same_dtype(x, beta, "batchnorm2d");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} ||
      state.running_mean.shape() != Shape{c} || state.running_var.shape() != Shape{c})
    throw ShapeError("batchnorm2d: parameters must have shape [" + std::to_string(c) +
                     "] for input " + shape_str(x.shape()));
  const std::size_t count = n * hw;
  if (mode == Mode::train && count < 2)
    throw ShapeError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                     shape_str(x.shape()));

  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  // Normalized input and per-channel 1/sqrt(var+eps), kept for backward.
  Tensor xhat = Tensor::zeros(x.shape(), x.dtype());
  Tensor inv_std = Tensor::zeros({c}, x.dtype());

  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    auto xh = xhat.data<T>();
    auto istd = inv_std.data<T>();
    auto gm = gamma.data<T>();
    auto bt = beta.data<T>();
    auto rm = state.running_mean.data<T>();
    auto rv = state.running_var.data<T>();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mu = 0.0, var = 0.0;
      if (mode == Mode::train) {
        for (std::size_t s = 0; s < n; ++s) {
          const T* p = in.data() + (s * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) mu += static_cast<double>(p[i]);
        }
        mu /= static_cast<double>(count);
        for (std::size_t s = 0; s < n; ++s) {
          const T* p = in.data() + (s * c + ch) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const double d = static_cast<double>(p[i]) - mu;
            var += d * d;
          }
        }
        const double unbiased = var / static_cast<double>(count - 1);
        var /= static_cast<double>(count);
        rm[ch] = static_cast<T>(state.momentum * static_cast<double>(rm[ch]) +
                                (1.0 - state.momentum) * mu);
        rv[ch] = static_cast<T>(state.momentum * static_cast<double>(rv[ch]) +
                                (1.0 - state.momentum) * unbiased);
      } else {
        mu = static_cast<double>(rm[ch]);
        var = static_cast<double>(rv[ch]);
      }
      const T inv = static_cast<T>(1.0 / std::sqrt(var + state.eps));
      const T mean_t = static_cast<T>(mu);
      istd[ch] = inv;
      for (std::size_t s = 0; s < n; ++s) {
        const std::size_t off = (s * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const T v = (in[off + i] - mean_t) * inv;
          xh[off + i] = v;
          o[off + i] = gm[ch] * v + bt[ch];
        }
      }
    }
  });
  require_finite(out, "batchnorm2d");

  if (should_record({&x, &gamma, &beta})) {
    Tape::active()->record(
        {x, gamma, beta}, out,
        [x = x, gamma = gamma, beta = beta, out, xhat, inv_std, mode, n, c, hw, count]() mutable {
          dispatch(out.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto g = std::as_const(out).grad_data<T>();
            auto xh = std::as_const(xhat).data<T>();
            auto istd = std::as_const(inv_std).data<T>();
            auto gm = std::as_const(gamma).data<T>();
            for (std::size_t ch = 0; ch < c; ++ch) {
              double sum_g = 0.0, sum_gx = 0.0;
              for (std::size_t s = 0; s < n; ++s) {
                const std::size_t off = (s * c + ch) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                  sum_g += static_cast<double>(g[off + i]);
                  sum_gx += static_cast<double>(g[off + i]) * static_cast<double>(xh[off + i]);
                }
              }
              if (gamma.requires_grad()) gamma.grad_data<T>()[ch] += static_cast<T>(sum_gx);
              if (beta.requires_grad()) beta.grad_data<T>()[ch] += static_cast<T>(sum_g);
              if (!x.requires_grad()) continue;
              auto gx = x.grad_data<T>();
              const T k = gm[ch] * istd[ch];
              if (mode == Mode::train) {
                const T mean_g = static_cast<T>(sum_g / static_cast<double>(count));
                const T mean_gx = static_cast<T>(sum_gx / static_cast<double>(count));
                for (std::size_t s = 0; s < n; ++s) {
                  const std::size_t off = (s * c + ch) * hw;
                  for (std::size_t i = 0; i < hw; ++i)
                    gx[off + i] += k * (g[off + i] - mean_g - xh[off + i] * mean_gx);
                }
              } else {
                for (std::size_t s = 0; s < n; ++s) {
                  const std::size_t off = (s * c + ch) * hw;
                  for (std::size_t i = 0; i < hw; ++i) gx[off + i] += k * g[off + i];
                }
              }
            }
          });
        });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pooling, concatenation
// ---------------------------------------------------------------------------

Tensor global_max_pool(const Tensor& x) {
  require_rank(x, 4, "global_max_pool", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = Tensor::zeros({n, c}, x.dtype());
  std::vector<std::size_t> argmax(n * c);
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::size_t slice = 0; slice < n * c; ++slice) {
      const T* p = in.data() + slice * hw;
      std::size_t best = 0;
      for (std::size_t i = 1; i < hw; ++i)
        if (p[i] > p[best]) best = i;
      argmax[slice] = best;
      o[slice] = p[best];
    }
  });
  if (auto* probe = detail::BranchProbe::active())
    for (auto idx : argmax) probe->mix(idx);
  if (should_record({&x})) {
    Tape::active()->record({x}, out, [x = x, out, argmax = std::move(argmax), hw]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = std::as_const(out).grad_data<T>();
        auto gx = x.grad_data<T>();
        for (std::size_t slice = 0; slice < g.size(); ++slice)
          gx[slice * hw + argmax[slice]] += g[slice];
      });
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size())
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    require_same_dtype(parts.front(), p, "concat");
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d)
      if (d != axis && s[d] != ref[d]) ok = false;
    if (!ok)
      throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(ref) +
                       " on axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  const std::size_t out_row = out_shape[axis] * inner;

  Tensor out = Tensor::zeros(out_shape, parts.front().dtype());
  dispatch(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = out.data<T>();
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t row = p.dim(axis) * inner;
      auto in = p.data<T>();
      for (std::size_t r = 0; r < outer; ++r)
        std::copy_n(in.data() + r * row, row, o.data() + r * out_row + offset);
      offset += row;
    }
  });

  bool record = false;
  for (const auto& p : parts) record = record || should_record({&p});
  if (record) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    Tape::active()->record(inputs, out, [inputs, out, outer, inner, out_row, axis]() mutable {
      dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto g = std::as_const(out).grad_data<T>();
        std::size_t offset = 0;
        for (auto& p : inputs) {
          const std::size_t row = p.dim(axis) * inner;
          if (p.requires_grad()) {
            auto gp = p.grad_data<T>();
            for (std::size_t r = 0; r < outer; ++r)
              for (std::size_t i = 0; i < row; ++i)
                gp[r * row + i] += g[r * out_row + offset + i];
          }
          offset += row;
        }
      });
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  const Tensor parts[] = {a, b};
  return concat(std::span<const Tensor>(parts), axis);
}

// ---------------------------------------------------------------------------
// Softmax / cross-entropy
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  Tensor out = Tensor::zeros(logits.shape(), logits.dtype());
  dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = logits.data<T>();
    auto o = out.data<T>();
    for (std::size_t r = 0; r < n; ++r) {
      const T* z = in.data() + r * k;
      T* p = o.data() + r * k;
      const T zmax = *std::max_element(z, z + k);
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        p[j] = std::exp(z[j] - zmax);
        total += static_cast<double>(p[j]);
      }
      for (std::size_t j = 0; j < k; ++j)
        p[j] = static_cast<T>(static_cast<double>(p[j]) / total);
    }
  });
  require_finite(out, "softmax");
  return out;
}

LossResult softmax_cross_entropy(const Tensor& logits,
                                 std::span<const std::int32_t> labels) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  for (auto y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) +
                       " outside [0," + std::to_string(k) + ")");

  Tensor probs = softmax(logits);
  Tensor loss = Tensor::zeros({1}, logits.dtype());
  dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto z = logits.data<T>();
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      // log p_y = z_y - zmax - log(sum exp(z - zmax))
      const T* row = z.data() + r * k;
      const double zmax = static_cast<double>(*std::max_element(row, row + k));
      double se = 0.0;
      for (std::size_t j = 0; j < k; ++j) se += std::exp(static_cast<double>(row[j]) - zmax);
      total -= static_cast<double>(row[labels[r]]) - zmax - std::log(se);
    }
    loss.data<T>()[0] = static_cast<T>(total / static_cast<double>(n));
  });
  require_finite(loss, "softmax_cross_entropy");

  if (should_record({&logits})) {
    std::vector<std::int32_t> ys(labels.begin(), labels.end());
    Tape::active()->record({logits}, loss, [logits = logits, loss, probs, ys, n, k]() mutable {
      dispatch(loss.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T g = std::as_const(loss).grad_data<T>()[0] / static_cast<T>(n);
        auto p = std::as_const(probs).data<T>();
        auto gz = logits.grad_data<T>();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < k; ++j)
            gz[r * k + j] += g * (p[r * k + j] - (static_cast<std::size_t>(ys[r]) == j ? T(1) : T(0)));
      });
    });
  }
  return {loss, probs};
}

}  // namespace rcf
