// SPDX-License-Identifier: Apache-2.0
#include "rcf/parameter.hpp"

namespace rcf {

ParamList trainable(const ParamList& all) {
  ParamList out;
  for (const auto& p : all)
    if (p.trainable()) out.push_back(p);
  return out;
}

std::size_t count_elements(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

void zero_grads(ParamList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace rcf
