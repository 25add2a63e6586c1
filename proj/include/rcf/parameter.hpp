// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "rcf/tensor.hpp"

namespace rcf {

/// What a named tensor is, which decides how the optimizer treats it.
enum class ParamRole {
  weight,  // conv / linear weight, subject to weight decay
  bias,
  norm,    // batchnorm gamma / beta
  buffer,  // running statistics and other non-trainable state
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  ParamRole role = ParamRole::weight;

  bool trainable() const { return role != ParamRole::buffer; }
};

using ParamList = std::vector<NamedTensor>;

/// Trainable entries only.
ParamList trainable(const ParamList& all);
std::size_t count_elements(const ParamList& params);
void zero_grads(ParamList& params);

}  // namespace rcf
