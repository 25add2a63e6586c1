// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rcf/image_io.hpp"
#include "rcf/tensor.hpp"

namespace rcf {

/**
 * Colorizes a depth map by its surface normals.
 *
 * Per pixel, image-space depth gradients gu (along columns) and gv (along
 * rows) are central differences in mm/pixel; out-of-image and missing
 * neighbors take the center pixel's depth. The normal (−gu, −gv, 1) is
 * normalized and mapped from [−1, 1] to [0, 1] as (n + 1) / 2, giving a
 * 3 x H x W f32 tensor. Missing pixels encode the camera-facing normal
 * (0.5, 0.5, 1.0). Throws ShapeError below 3 x 3.
 */
Tensor depth_to_normals(const DepthImage& depth);

}  // namespace rcf
