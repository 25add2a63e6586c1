// SPDX-License-Identifier: Apache-2.0
#include "rcf/layers.hpp"

#include "rcf/init.hpp"

namespace rcf {

Conv2d Conv2d::make(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                    std::size_t pad, bool with_bias, DType dtype, Rng& rng) {
  Conv2d c;
  const std::size_t field = kernel * kernel;
  c.weight = xavier_init({out, in, kernel, kernel}, in * field, out * field, rng, dtype);
  if (with_bias) c.bias = Tensor::zeros({out}, dtype);
  c.stride = stride;
  c.pad = pad;
  return c;
}

void Conv2d::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight, ParamRole::weight});
  if (bias) out.push_back({prefix + ".bias", *bias, ParamRole::bias});
}

BatchNorm2d BatchNorm2d::make(std::size_t channels, DType dtype) {
  return {Tensor::full({channels}, 1.0, dtype), Tensor::zeros({channels}, dtype),
          BatchNormState::init(channels, dtype)};
}

void BatchNorm2d::reset() {
  dispatch(gamma.dtype(), [&](auto tag) {
    using T = decltype(tag);
    for (T& v : gamma.data<T>()) v = T(1);
    for (T& v : beta.data<T>()) v = T(0);
    for (T& v : state.running_mean.data<T>()) v = T(0);
    for (T& v : state.running_var.data<T>()) v = T(1);
  });
}

void BatchNorm2d::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".gamma", gamma, ParamRole::norm});
  out.push_back({prefix + ".beta", beta, ParamRole::norm});
  out.push_back({prefix + ".running_mean", state.running_mean, ParamRole::buffer});
  out.push_back({prefix + ".running_var", state.running_var, ParamRole::buffer});
}

ConvBnRelu ConvBnRelu::make(std::size_t in, std::size_t out, std::size_t kernel,
                            std::size_t stride, std::size_t pad, DType dtype, Rng& rng) {
  return {Conv2d::make(in, out, kernel, stride, pad, false, dtype, rng),
          BatchNorm2d::make(out, dtype)};
}

void ConvBnRelu::collect(ParamList& out, const std::string& prefix, const std::string& conv_name,
                         const std::string& bn_name) const {
  conv.collect(out, prefix + "." + conv_name);
  bn.collect(out, prefix + "." + bn_name);
}

Linear Linear::make(std::size_t in, std::size_t out, bool with_bias, DType dtype, Rng& rng) {
  Linear l;
  l.weight = xavier_init({in, out}, in, out, rng, dtype);
  if (with_bias) l.bias = Tensor::zeros({out}, dtype);
  return l;
}

void Linear::collect(ParamList& out, const std::string& weight_name,
                     const std::string& bias_name) const {
  out.push_back({weight_name, weight, ParamRole::weight});
  if (bias) out.push_back({bias_name, *bias, ParamRole::bias});
}

void enable_grads(const ParamList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(p.trainable());
  }
}

}  // namespace rcf
