// SPDX-License-Identifier: Apache-2.0
#include "rcf/depth_encoding.hpp"

#include <cmath>

namespace rcf {

Tensor depth_to_normals(const DepthImage& depth) {
  const std::size_t h = depth.height, w = depth.width;
  if (h < 3 || w < 3)
    throw ShapeError("depth_to_normals: image must be at least 3x3, got " +
                     std::to_string(w) + "x" + std::to_string(h));
  if (depth.values.size() != h * w)
    throw ShapeError("depth_to_normals: value count does not match dimensions");

  Tensor out = Tensor::zeros({3, h, w});
  auto px = out.data<float>();
  const std::size_t plane = h * w;

  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      const double center = depth.values[i];
      double nx = 0.0, ny = 0.0, nz = 1.0;
      if (center > 0.0) {
        const auto sample = [&](std::size_t rr, std::size_t cc) {
          const double v = depth.values[rr * w + cc];
          return v > 0.0 ? v : center;
        };
        const double left = c > 0 ? sample(r, c - 1) : center;
        const double right = c + 1 < w ? sample(r, c + 1) : center;
        const double up = r > 0 ? sample(r - 1, c) : center;
        const double down = r + 1 < h ? sample(r + 1, c) : center;
        const double gu = (right - left) / 2.0;
        const double gv = (down - up) / 2.0;
        const double norm = std::sqrt(gu * gu + gv * gv + 1.0);
        nx = -gu / norm;
        ny = -gv / norm;
        nz = 1.0 / norm;
      }
      px[i] = static_cast<float>((nx + 1.0) / 2.0);
      px[plane + i] = static_cast<float>((ny + 1.0) / 2.0);
      px[2 * plane + i] = static_cast<float>((nz + 1.0) / 2.0);
    }
  }
  return out;
}

}  // namespace rcf
