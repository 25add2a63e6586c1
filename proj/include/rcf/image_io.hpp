// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "rcf/tensor.hpp"

namespace rcf {

/// 16-bit depth map in millimeters; 0 marks a missing measurement.
struct DepthImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint16_t> values;  // row-major

  std::uint16_t at(std::size_t row, std::size_t col) const { return values[row * width + col]; }
  bool operator==(const DepthImage&) const = default;
};

/// 8-bit interleaved RGB image.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel

  bool operator==(const RgbImage&) const = default;
};

using Image = std::variant<DepthImage, RgbImage>;

/// Parses binary PGM (P5) as depth and binary PPM (P6, maxval 255) as RGB.
/// Two-byte P5 samples are big-endian.
Image read_image(const std::filesystem::path& path);
Image parse_image(const std::vector<std::uint8_t>& bytes);
DepthImage read_depth(const std::filesystem::path& path);
RgbImage read_rgb(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_pgm(const DepthImage& image);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
void write_image(const std::filesystem::path& path, const DepthImage& image);
void write_image(const std::filesystem::path& path, const RgbImage& image);

/// 3 x H x W f32 tensor, channel values scaled to [0, 1].
Tensor rgb_to_tensor(const RgbImage& image);

}  // namespace rcf
