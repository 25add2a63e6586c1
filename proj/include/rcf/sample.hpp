// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "rcf/tensor.hpp"

namespace rcf {

/// One paired RGB / encoded-depth observation.
struct RgbdSample {
  Tensor rgb;            // 3 x H x W in [0, 1]
  Tensor depth_encoded;  // 3 x H x W in [0, 1]
  std::int32_t label = 0;
};

using Dataset = std::vector<RgbdSample>;

/// Throws ShapeError unless rgb and depth share H, W and label is in [0, K).
void validate_sample(const RgbdSample& sample, std::size_t num_classes);

}  // namespace rcf
