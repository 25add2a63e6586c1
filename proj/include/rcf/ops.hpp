// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rcf/tensor.hpp"

namespace rcf {

enum class Mode { train, eval };
enum class Activation { relu, sigmoid, tanh };

// Elementwise ops on equal shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Sum / mean of all elements, as a shape-{1} tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor activation(const Tensor& x, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }
inline Tensor tanh(const Tensor& x) { return activation(x, Activation::tanh); }

/// x (N x F) times weight (F x G) plus optional bias (G).
Tensor linear(const Tensor& x, const Tensor& weight,
              const std::optional<Tensor>& bias = std::nullopt);

/// NCHW cross-correlation with square kernels; weight is O x I x k x k.
Tensor conv2d(const Tensor& x, const Tensor& weight,
              const std::optional<Tensor>& bias, std::size_t stride,
              std::size_t pad);

struct BatchNormState {
  Tensor running_mean;  // C, starts at 0
  Tensor running_var;   // C, starts at 1
  double momentum = 0.9;  // weight kept by the running estimate per update
  double eps = 1e-5;

  static BatchNormState init(std::size_t channels, DType dtype);
};

/// Per-channel normalization of an NCHW tensor. Train mode normalizes with
/// biased batch statistics and folds the (unbiased) batch variance into the
/// running state; eval mode uses the running state.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Mode mode, BatchNormState& state);

/// N x C x H x W -> N x C. Backward routes to the first maximum in
/// row-major order.
Tensor global_max_pool(const Tensor& x);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);

/// Row-wise softmax of N x K logits (not differentiable).
Tensor softmax(const Tensor& logits);

struct LossResult {
  Tensor loss;           // shape {1}, mean negative log-likelihood
  Tensor probabilities;  // N x K
};

LossResult softmax_cross_entropy(const Tensor& logits,
                                 std::span<const std::int32_t> labels);

namespace testing {

/// Deliberately wrong backward rules, used as negative controls for the
/// gradient checker.
enum class Fault { none, linear_weight_grad, conv_weight_grad };

Fault active_fault();

class ScopedFault {
 public:
  explicit ScopedFault(Fault fault);
  ~ScopedFault();
  ScopedFault(const ScopedFault&) = delete;
  ScopedFault& operator=(const ScopedFault&) = delete;

 private:
  Fault previous_;
};

}  // namespace testing

}  // namespace rcf
