// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "rcf/ops.hpp"
#include "rcf/parameter.hpp"
#include "rcf/random.hpp"

namespace rcf {

struct Conv2d {
  Tensor weight;  // O x I x k x k
  std::optional<Tensor> bias;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static Conv2d make(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                     std::size_t pad, bool with_bias, DType dtype, Rng& rng);
  Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  void collect(ParamList& out, const std::string& prefix) const;
};

struct BatchNorm2d {
  Tensor gamma;
  Tensor beta;
  BatchNormState state;

  static BatchNorm2d make(std::size_t channels, DType dtype);
  Tensor forward(const Tensor& x, Mode mode) { return batchnorm2d(x, gamma, beta, mode, state); }
  /// gamma = 1, beta = 0, running mean 0 / var 1.
  void reset();
  void collect(ParamList& out, const std::string& prefix) const;
};

/// conv -> batchnorm -> relu
struct ConvBnRelu {
  Conv2d conv;
  BatchNorm2d bn;

  static ConvBnRelu make(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                         std::size_t pad, DType dtype, Rng& rng);
  Tensor forward(const Tensor& x, Mode mode) { return relu(bn.forward(conv.forward(x), mode)); }
  void collect(ParamList& out, const std::string& prefix, const std::string& conv_name,
               const std::string& bn_name) const;
};

struct Linear {
  Tensor weight;  // in x out
  std::optional<Tensor> bias;

  static Linear make(std::size_t in, std::size_t out, bool with_bias, DType dtype, Rng& rng);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(ParamList& out, const std::string& weight_name, const std::string& bias_name) const;
};

/// Marks every trainable tensor in `params` as requiring gradients.
void enable_grads(const ParamList& params);

}  // namespace rcf
