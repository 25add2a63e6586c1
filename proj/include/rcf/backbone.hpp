// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "rcf/layers.hpp"

namespace rcf {

struct BackboneConfig {
  std::size_t input_hw = 64;
  std::size_t in_channels = 3;
  std::size_t stem_channels = 16;
  std::size_t num_blocks = 3;
  std::size_t channel_multiplier = 2;
  static constexpr std::size_t taps_per_block = 2;

  /// Throws ConfigError for an empty network or an input too small to be
  /// halved num_blocks − 1 times.
  void validate() const;
  std::size_t num_levels() const { return taps_per_block * num_blocks; }
  std::size_t block_channels(std::size_t block) const;
  std::size_t block_spatial(std::size_t block) const;
  /// C, H, W of every tap, shallow to deep.
  std::vector<Shape> tap_shapes() const;

  bool operator==(const BackboneConfig&) const = default;
};

/// Taps of one stream, ordered shallow -> deep.
struct MultiLevelFeatures {
  std::vector<Tensor> levels;

  std::size_t size() const { return levels.size(); }
  const Tensor& operator[](std::size_t i) const { return levels.at(i); }
  const Tensor& deepest() const { return levels.back(); }
};

/// Two conv-bn-relu layers; the skip path is added before the second relu.
/// Blocks after the first enter with stride 2 and a 1x1 projection skip.
struct ResidualBlock {
  ConvBnRelu first;
  Conv2d second_conv;
  BatchNorm2d second_bn;
  std::optional<Conv2d> skip;
};

class Backbone {
 public:
  /// Stem conv3x3 + BN + relu followed by num_blocks residual blocks;
  /// conv weights Xavier-initialized.
  static Backbone build(const BackboneConfig& config, DType dtype, Rng& rng);

  MultiLevelFeatures forward_multilevel(const Tensor& x, Mode mode);

  /// Named tensors under `prefix` (e.g. "rgb.block2.conv1.weight").
  ParamList parameters(const std::string& prefix) const;

  const BackboneConfig& config() const { return config_; }
  ConvBnRelu& stem() { return stem_; }
  std::vector<ResidualBlock>& blocks() { return blocks_; }

 private:
  BackboneConfig config_;
  ConvBnRelu stem_;
  std::vector<ResidualBlock> blocks_;
};

}  // namespace rcf
