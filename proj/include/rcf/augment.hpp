// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "rcf/random.hpp"
#include "rcf/sample.hpp"

namespace rcf {

struct AugmentConfig {
  bool scale = true;
  double scale_min = 0.9;
  double scale_max = 1.1;
  bool hflip = true;
  bool vflip = true;
  bool rotate90 = true;

  static AugmentConfig disabled() { return {false, 0.9, 1.1, false, false, false}; }
  bool operator==(const AugmentConfig&) const = default;
};

/**
 * Random scaling, horizontal / vertical flips and rotation by a multiple of
 * 90°, applied identically to both modalities.
 *
 * Every call consumes the same four draws from `rng` regardless of which
 * transforms are enabled. Scaling resamples with nearest neighbor and then
 * center-crops or edge-pads back to the original size. A quarter turn of a
 * non-square image is resampled back to H x W.
 */
RgbdSample augment(const RgbdSample& sample, Rng& rng, const AugmentConfig& config);

// Geometric primitives on C x H x W tensors.
Tensor flip_horizontal(const Tensor& image);
Tensor flip_vertical(const Tensor& image);
/// Counter-clockwise quarter turns; output is C x W x H for odd turns.
Tensor rotate90(const Tensor& image, int quarter_turns);
Tensor resize_nearest(const Tensor& image, std::size_t height, std::size_t width);
/// Center crop / edge-replicating pad to the given size.
Tensor center_fit(const Tensor& image, std::size_t height, std::size_t width);

struct ChannelStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};

  bool operator==(const ChannelStats&) const = default;
};

/// Per-channel (x − mean) / std; throws ConfigError for non-positive std.
Tensor standardize(const Tensor& image, const ChannelStats& stats);
Tensor unstandardize(const Tensor& image, const ChannelStats& stats);

/// Mean / population std over every pixel of the given 3 x H x W images.
ChannelStats compute_channel_stats(const std::vector<Tensor>& images);

}  // namespace rcf
