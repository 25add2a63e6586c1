// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rcf/random.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

/// Xavier/Glorot uniform: U(−b, b) with b = sqrt(6 / (fan_in + fan_out)).
/// Conv callers pass fans that include the receptive-field size.
Tensor xavier_init(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng,
                   DType dtype = DType::f32);

double xavier_bound(std::size_t fan_in, std::size_t fan_out);

}  // namespace rcf
