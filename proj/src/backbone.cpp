// SPDX-License-Identifier: Apache-2.0
#include "rcf/backbone.hpp"

namespace rcf {

void BackboneConfig::validate() const {
  if (num_blocks < 1) throw ConfigError("backbone: num_blocks must be at least 1");
  if (stem_channels < 1 || in_channels < 1 || channel_multiplier < 1)
    throw ConfigError("backbone: channel counts must be positive");
  if (num_blocks > 20) throw ConfigError("backbone: num_blocks too large");
  if (input_hw < (std::size_t{1} << (num_blocks - 1)))
    throw ConfigError("backbone: input " + std::to_string(input_hw) +
                      " smaller than total downsampling 2^" + std::to_string(num_blocks - 1));
}

std::size_t BackboneConfig::block_channels(std::size_t block) const {
  std::size_t c = stem_channels;
  for (std::size_t b = 0; b < block; ++b) c *= channel_multiplier;
  return c;
}

std::size_t BackboneConfig::block_spatial(std::size_t block) const {
  std::size_t s = input_hw;
  for (std::size_t b = 0; b < block; ++b) s = (s + 1) / 2;  // 3x3, stride 2, pad 1
  return s;
}

std::vector<Shape> BackboneConfig::tap_shapes() const {
  std::vector<Shape> out;
  for (std::size_t b = 0; b < num_blocks; ++b)
    for (std::size_t t = 0; t < taps_per_block; ++t)
      out.push_back({block_channels(b), block_spatial(b), block_spatial(b)});
  return out;
}

Backbone Backbone::build(const BackboneConfig& config, DType dtype, Rng& rng) {
  config.validate();
  Backbone net;
  net.config_ = config;
  net.stem_ = ConvBnRelu::make(config.in_channels, config.stem_channels, 3, 1, 1, dtype, rng);
  std::size_t in = config.stem_channels;
  for (std::size_t b = 0; b < config.num_blocks; ++b) {
    const std::size_t out = config.block_channels(b);
    const std::size_t stride = b == 0 ? 1 : 2;
    ResidualBlock block{ConvBnRelu::make(in, out, 3, stride, 1, dtype, rng),
                        Conv2d::make(out, out, 3, 1, 1, false, dtype, rng),
                        BatchNorm2d::make(out, dtype), std::nullopt};
    if (stride != 1 || in != out) block.skip = Conv2d::make(in, out, 1, stride, 0, false, dtype, rng);
    net.blocks_.push_back(std::move(block));
    in = out;
  }
  return net;
}

MultiLevelFeatures Backbone::forward_multilevel(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != config_.in_channels || x.dim(2) != config_.input_hw ||
      x.dim(3) != config_.input_hw)
    throw ShapeError("backbone: expected N x " + std::to_string(config_.in_channels) + " x " +
                     std::to_string(config_.input_hw) + " x " + std::to_string(config_.input_hw) +
                     " input, got " + shape_str(x.shape()));
  MultiLevelFeatures features;
  Tensor h = stem_.forward(x, mode);
  for (auto& block : blocks_) {
    Tensor a = block.first.forward(h, mode);
    Tensor shortcut = block.skip ? block.skip->forward(h) : h;
    Tensor b = relu(add(block.second_bn.forward(block.second_conv.forward(a), mode), shortcut));
    features.levels.push_back(a);
    features.levels.push_back(b);
    h = b;
  }
  return features;
}

ParamList Backbone::parameters(const std::string& prefix) const {
  ParamList out;
  stem_.collect(out, prefix + ".stem", "conv", "bn");
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = prefix + ".block" + std::to_string(b + 1);
    const auto& block = blocks_[b];
    block.first.collect(out, p, "conv1", "bn1");
    block.second_conv.collect(out, p + ".conv2");
    block.second_bn.collect(out, p + ".bn2");
    if (block.skip) block.skip->collect(out, p + ".skip");
  }
  return out;
}

}  // namespace rcf
