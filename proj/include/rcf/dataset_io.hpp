// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rcf/image_io.hpp"
#include "rcf/sample.hpp"

namespace rcf {

/// Undecoded sample as stored on disk.
struct RawSample {
  std::string id;
  RgbImage rgb;
  DepthImage depth;
  std::int32_t label = 0;
};

struct RawDataset {
  std::vector<std::string> class_names;  // index == label
  std::vector<RawSample> samples;
};

/**
 * Reads `<root>/<class_name>/<sample_id>_rgb.ppm` + `<sample_id>_depth.pgm`.
 * Labels follow sorted class-name order; samples are ordered by class, then
 * by id. A class directory with an unpaired file is a FormatError.
 */
RawDataset read_dataset_dir(const std::filesystem::path& root);
void write_dataset_dir(const std::filesystem::path& root, const RawDataset& data);

/// True when `dir` holds class subdirectories with sample files.
bool is_split_dir(const std::filesystem::path& dir);

/// rgb scaled to [0, 1]; depth colorized by surface normals.
RgbdSample encode_sample(const RawSample& raw);
Dataset encode_dataset(const RawDataset& raw);

}  // namespace rcf
