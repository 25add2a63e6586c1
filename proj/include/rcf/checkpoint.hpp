// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rcf/tensor.hpp"

namespace rcf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Tensor tensor;
};

/**
 * Binary layout, all integers little-endian:
 *
 *   "RCFK" | u32 version | u32 count |
 *   count × { u32 name_len | name | u8 dtype (0 f32, 1 f64) | u8 rank |
 *             rank × u64 dim | row-major payload }
 *   | u32 CRC32 of every preceding byte
 */
std::vector<std::uint8_t> encode_checkpoint(std::span<const CheckpointEntry> entries);

/// Throws FormatError on a bad magic, version, CRC or truncated payload.
std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, std::span<const CheckpointEntry> entries);
std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path);

}  // namespace rcf
