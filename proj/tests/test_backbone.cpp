// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"
#include "rcf/backbone.hpp"
#include "rcf/grad_check.hpp"

using namespace rcf;
using test::random_tensor;

namespace {

BackboneConfig small_config(std::size_t hw = 16, std::size_t blocks = 2, std::size_t stem = 4) {
  BackboneConfig c;
  c.input_hw = hw;
  c.num_blocks = blocks;
  c.stem_channels = stem;
  return c;
}

void zero_convs_and_neutral_bn(Backbone& net) {
  auto zero = [](Tensor& t) {
    dispatch(t.dtype(), [&](auto tag) {
      using T = decltype(tag);
      for (auto& v : t.data<T>()) v = T(0);
    });
  };
  net.stem().bn.reset();
  for (auto& b : net.blocks()) {
    zero(b.first.conv.weight);
    zero(b.second_conv.weight);
    b.first.bn.reset();
    b.second_bn.reset();
  }
}

}  // namespace

TEST(BackboneConfig, ChannelsAndLevels) {
  BackboneConfig c;  // B=3, stem 16
  EXPECT_EQ(c.num_levels(), 6u);
  EXPECT_EQ(c.block_channels(0), 16u);
  EXPECT_EQ(c.block_channels(1), 32u);
  EXPECT_EQ(c.block_channels(2), 64u);
}

TEST(BackboneConfig, TapSpatialSizes) {
  BackboneConfig c;
  c.input_hw = 64;
  std::vector<std::size_t> hw;
  for (const auto& s : c.tap_shapes()) hw.push_back(s[1]);
  EXPECT_EQ(hw, (std::vector<std::size_t>{64, 64, 32, 32, 16, 16}));
}

TEST(BackboneConfig, RejectsInvalid) {
  BackboneConfig c;
  c.num_blocks = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = BackboneConfig{};
  c.input_hw = 2;  // three blocks halve twice
  EXPECT_THROW(c.validate(), ConfigError);
  c.input_hw = 4;
  EXPECT_NO_THROW(c.validate());
  Rng rng(1);
  c.input_hw = 3;
  EXPECT_THROW(Backbone::build(c, DType::f32, rng), ConfigError);
}

TEST(Backbone, SameSeedSameParameters) {
  Rng a(42), b(42), c(43);
  const auto pa = Backbone::build(small_config(), DType::f32, a).parameters("rgb");
  const auto pb = Backbone::build(small_config(), DType::f32, b).parameters("rgb");
  const auto pc = Backbone::build(small_config(), DType::f32, c).parameters("rgb");
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(pa[i].tensor.bitwise_equal(pb[i].tensor)) << pa[i].name;
    any_diff |= !pa[i].tensor.bitwise_equal(pc[i].tensor);
  }
  EXPECT_TRUE(any_diff);
}

TEST(Backbone, ParameterNames) {
  Rng rng(0);
  const auto params = Backbone::build(small_config(), DType::f32, rng).parameters("rgb");
  std::vector<std::string> names;
  for (const auto& p : params) names.push_back(p.name);
  auto has = [&](const std::string& n) {
    return std::find(names.begin(), names.end(), n) != names.end();
  };
  EXPECT_TRUE(has("rgb.stem.conv.weight"));
  EXPECT_TRUE(has("rgb.block1.conv1.weight"));
  EXPECT_TRUE(has("rgb.block2.conv1.weight"));
  EXPECT_TRUE(has("rgb.block2.bn2.running_var"));
  EXPECT_TRUE(has("rgb.block2.skip.weight"));
  EXPECT_FALSE(has("rgb.block1.skip.weight"));
}

TEST(Backbone, ReturnsTwoTapsPerBlockInDepthOrder) {
  BackboneConfig c;
  c.input_hw = 16;
  Rng rng(3);
  Backbone net = Backbone::build(c, DType::f32, rng);
  Tensor x = random_tensor({2, 3, 16, 16}, rng, DType::f32);
  const auto taps = net.forward_multilevel(x, Mode::train);
  ASSERT_EQ(taps.size(), 6u);
  const auto expected = c.tap_shapes();
  for (std::size_t i = 0; i < taps.size(); ++i) {
    Shape s = expected[i];
    s.insert(s.begin(), 2);
    EXPECT_EQ(taps[i].shape(), s) << i;
  }
  EXPECT_TRUE(taps.deepest().same_storage(taps[5]));
}

TEST(Backbone, ZeroInputZeroWeightsGivesZeroTaps) {
  Rng rng(5);
  Backbone net = Backbone::build(small_config(), DType::f32, rng);
  zero_convs_and_neutral_bn(net);
  for (auto& v : net.stem().conv.weight.data<float>()) v = 0.0f;
  Tensor x = Tensor::zeros({1, 3, 16, 16});
  for (const auto& t : net.forward_multilevel(x, Mode::eval).levels)
    for (float v : t.data<float>()) EXPECT_EQ(v, 0.0f);
}

TEST(Backbone, StreamsWithEqualConfigHaveEqualTapShapes) {
  Rng rng(9);
  Backbone rgb = Backbone::build(small_config(), DType::f32, rng);
  Backbone depth = Backbone::build(small_config(), DType::f32, rng);
  Tensor a = random_tensor({2, 3, 16, 16}, rng, DType::f32);
  Tensor b = random_tensor({2, 3, 16, 16}, rng, DType::f32, 0.0, 1.0);
  const auto ta = rgb.forward_multilevel(a, Mode::train);
  const auto tb = depth.forward_multilevel(b, Mode::train);
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(ta[i].shape(), tb[i].shape());
}

TEST(Backbone, TapShapesDoNotDependOnData) {
  Rng rng(11);
  Backbone net = Backbone::build(small_config(16, 3), DType::f32, rng);
  std::vector<Shape> first;
  for (int trial = 0; trial < 3; ++trial) {
    Tensor x = random_tensor({2, 3, 16, 16}, rng, DType::f32, -10.0 * trial, 10.0 * trial + 1);
    const auto taps = net.forward_multilevel(x, trial % 2 ? Mode::eval : Mode::train);
    std::vector<Shape> shapes;
    for (const auto& t : taps.levels) shapes.push_back(t.shape());
    if (trial == 0)
      first = shapes;
    else
      EXPECT_EQ(shapes, first);
  }
}

TEST(Backbone, RejectsWrongInputShape) {
  Rng rng(1);
  Backbone net = Backbone::build(small_config(), DType::f32, rng);
  EXPECT_THROW(net.forward_multilevel(Tensor::zeros({1, 3, 8, 8}), Mode::eval), ShapeError);
  EXPECT_THROW(net.forward_multilevel(Tensor::zeros({1, 1, 16, 16}), Mode::eval), ShapeError);
  EXPECT_THROW(net.forward_multilevel(Tensor::zeros({3, 16, 16}), Mode::eval), ShapeError);
}

TEST(Backbone, ResidualIdentityWithZeroedBlockConvs) {
  Rng rng(21);
  BackboneConfig c = small_config(8, 2, 3);
  Backbone net = Backbone::build(c, DType::f64, rng);
  zero_convs_and_neutral_bn(net);
  Tensor x = random_tensor({2, 3, 8, 8}, rng);
  const auto taps = net.forward_multilevel(x, Mode::eval);
  const Tensor stem = net.stem().forward(x, Mode::eval);

  // block 1 keeps its shape: output equals its input
  EXPECT_TRUE(taps[1].bitwise_equal(stem));
  for (double v : taps[0].data<double>()) EXPECT_EQ(v, 0.0);

  // block 2 halves and widens: output equals relu of the 1x1 stride-2 projection
  const auto& skip = *net.blocks()[1].skip;
  const auto projected = oracle::naive_conv2d(taps[1], skip.weight, 2, 0);
  const auto got = taps[3].to_vector();
  ASSERT_EQ(got.size(), projected.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    EXPECT_NEAR(got[i], std::max(projected[i], 0.0), 1e-12);
}

TEST(Backbone, DeepestTapLossReachesStem) {
  Rng rng(31);
  Backbone net = Backbone::build(small_config(8, 2, 3), DType::f64, rng);
  Tensor x = random_tensor({2, 3, 8, 8}, rng);
  const Shape deep = {2, 6, 4, 4};
  Tensor weights = random_tensor(deep, rng);
  auto loss = [&] {
    return sum(mul(net.forward_multilevel(x, Mode::train).deepest(), weights));
  };
  ParamList stem;
  net.stem().collect(stem, "stem", "conv", "bn");
  stem = trainable(stem);
  const auto r = grad_check(loss, stem, {.eps = 1e-6});
  EXPECT_TRUE(r.passed) << r.worst_param << "[" << r.worst_index << "] " << r.max_rel_error;
  EXPECT_GT(r.checked, 0u);
  double norm = 0.0;
  for (double g : net.stem().conv.weight.grad_vector()) norm += g * g;
  EXPECT_GT(norm, 0.0);
}
