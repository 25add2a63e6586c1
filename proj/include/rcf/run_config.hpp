// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rcf/fusion.hpp"
#include "rcf/synth.hpp"
#include "rcf/trainer.hpp"

namespace rcf {

/// Value of RunConfig::data selecting the generated dataset.
inline constexpr std::string_view kSynthData = "synth";

/// Everything that determines a run.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  /// "synth", or a directory holding train/ and test/ splits.
  std::string data{kSynthData};

  /// Validates each part, and for synthetic data that the image size and
  /// class count agree with the model.
  void validate() const;
  bool uses_synth() const { return data == kSynthData; }
  bool operator==(const RunConfig&) const = default;
};

/**
 * Parses `key = value` lines. Blank lines and lines starting with '#' are
 * ignored; keys not set keep their defaults. Unknown or repeated keys and
 * malformed values throw ConfigError naming the line. The result is not
 * validated.
 */
RunConfig parse_run_config(std::string_view text);

/// Every key, one per line, in a fixed order; parse_run_config inverts it.
std::string render_run_config(const RunConfig& config);

/// All recognised keys.
std::vector<std::string_view> run_config_keys();

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace rcf
