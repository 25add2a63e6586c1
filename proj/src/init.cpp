// SPDX-License-Identifier: Apache-2.0
#include "rcf/init.hpp"

#include <cmath>

namespace rcf {

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  if (fan_in == 0 || fan_out == 0) throw ConfigError("xavier_init: fans must be positive");
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor xavier_init(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng,
                   DType dtype) {
  const double bound = xavier_bound(fan_in, fan_out);
  Tensor t = Tensor::zeros(std::move(shape), dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    for (T& v : t.data<T>()) v = static_cast<T>(uniform(rng, -bound, bound));
  });
  return t;
}

}  // namespace rcf
