// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <utility>

#include "rcf/dataset_io.hpp"
#include "rcf/sample.hpp"

namespace rcf {

/// Depth-only shape primitives, in class order.
inline constexpr std::array<std::string_view, 6> kShapeNames{"disc",  "square", "triangle",
                                                             "ring",  "cross",  "diamond"};

enum class Split { train, test };
std::string_view to_string(Split split);

/**
 * Synthetic RGB-D objects where color and geometry carry disjoint halves of
 * the label: class (s, c) has id s·C + c, its RGB image shows hue c on a
 * fixed disc and its depth image shows shape s at a fixed height.
 */
struct SynthConfig {
  std::size_t num_shapes = 4;  // S
  std::size_t num_hues = 4;    // C
  std::size_t train_per_class = 20;
  std::size_t test_per_class = 10;
  std::size_t image_size = 64;
  double noise_std = 0.02;  // RGB: fraction of full scale; depth: see kDepthNoiseMm
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t num_classes() const { return num_shapes * num_hues; }
  std::size_t per_class(Split split) const;
  bool operator==(const SynthConfig&) const = default;
};

inline constexpr std::uint16_t kBackgroundDepthMm = 1000;
inline constexpr std::uint16_t kObjectHeightMm = 60;
/// Depth noise standard deviation per unit of noise_std.
inline constexpr double kDepthNoiseMm = 10.0;

/// Class names sort in id order: "c005_square_h1".
std::string synth_class_name(std::size_t shape, std::size_t hue, std::size_t num_hues);

/// One sample of class (shape, hue); every random draw comes from `seed`.
/// The RGB image does not depend on `shape` and the depth image does not
/// depend on `hue`.
RawSample render_sample(const SynthConfig& config, std::size_t shape, std::size_t hue,
                        std::uint64_t seed);

/// Images before depth encoding; a pure function of (config, split).
RawDataset generate_raw(const SynthConfig& config, Split split);

/// generate_raw followed by RGB scaling and surface-normal depth encoding.
Dataset generate_dataset(const SynthConfig& config, Split split);

/// Best achievable accuracy of an RGB-only and a depth-only classifier:
/// (1/S, 1/C).
std::pair<double, double> bayes_bounds(const SynthConfig& config);

/// True when the canonical shape covers the point (x, y), both in units of
/// the shape size centered at the origin.
bool shape_contains(std::size_t shape, double x, double y);

/// Fully saturated color of hue index c out of C.
std::array<std::uint8_t, 3> hue_color(std::size_t hue, std::size_t num_hues);

}  // namespace rcf
