// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "rcf/random.hpp"
#include "rcf/tensor.hpp"

namespace rcf::test {

inline Tensor random_tensor(Shape shape, Rng& rng, DType dtype = DType::f64, double lo = -1.0,
                            double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return Tensor::from(std::move(shape), v, dtype);
}

inline Tensor param(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

}  // namespace rcf::test
