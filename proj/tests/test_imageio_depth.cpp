// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "rcf/augment.hpp"
#include "rcf/dataset_io.hpp"
#include "rcf/depth_encoding.hpp"
#include "rcf/image_io.hpp"

using namespace rcf;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

DepthImage plane(std::size_t w, std::size_t h, auto&& z) {
  DepthImage d{w, h, std::vector<std::uint16_t>(w * h)};
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) d.values[r * w + c] = static_cast<std::uint16_t>(z(r, c));
  return d;
}

double px(const Tensor& t, std::size_t ch, std::size_t r, std::size_t c) {
  return t.at((ch * t.dim(1) + r) * t.dim(2) + c);
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rcf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RgbdSample random_sample(Rng& rng, std::size_t h, std::size_t w) {
  std::vector<double> a(3 * h * w), b(3 * h * w);
  for (auto& v : a) v = uniform01(rng);
  for (auto& v : b) v = uniform01(rng);
  return {Tensor::from({3, h, w}, a), Tensor::from({3, h, w}, b), 3};
}

}  // namespace

TEST(ReadImage, PpmScalesTo01) {
  auto bytes = bytes_of("P6\n3 1\n255\n");
  for (int v : {255, 0, 0, 0, 255, 0, 0, 0, 255}) bytes.push_back(static_cast<std::uint8_t>(v));
  auto img = std::get<RgbImage>(parse_image(bytes));
  Tensor t = rgb_to_tensor(img);
  ASSERT_EQ(t.shape(), (Shape{3, 1, 3}));
  // Channel-major: pixel k is red, green, blue respectively.
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(px(t, c, 0, k), c == k ? 1.0 : 0.0);
}

TEST(ReadImage, PgmSixteenBitBigEndian) {
  auto bytes = bytes_of("P5\n1 1\n65535\n");
  bytes.push_back(1000 >> 8);
  bytes.push_back(1000 & 0xff);
  auto img = std::get<DepthImage>(parse_image(bytes));
  EXPECT_EQ(img.values, (std::vector<std::uint16_t>{1000}));
}

TEST(ReadImage, HeaderCommentsAreSkipped) {
  auto bytes = bytes_of("P5 # depth\n# another\n2 1\n65535\n");
  for (int v : {0, 7, 1, 0}) bytes.push_back(static_cast<std::uint8_t>(v));
  auto img = std::get<DepthImage>(parse_image(bytes));
  EXPECT_EQ(img.values, (std::vector<std::uint16_t>{7, 256}));
}

TEST(ReadImage, Errors) {
  EXPECT_THROW(parse_image(bytes_of("P3\n1 1\n255\n0 0 0\n")), FormatError);
  EXPECT_THROW(parse_image(bytes_of("P6\n2 2\n255\nabc")), FormatError);  // truncated
  EXPECT_THROW(parse_image(bytes_of("P5\n2\n")), FormatError);            // missing height
  EXPECT_THROW(parse_image(bytes_of("P6\n1 1\n65535\n012345")), FormatError);
  EXPECT_THROW(parse_image(bytes_of("")), FormatError);
  EXPECT_THROW(read_image("/nonexistent/file.pgm"), FormatError);
}

TEST(ReadImage, WriteReadRoundTripIsByteIdentical) {
  Rng rng(42);
  const fs::path dir = temp_dir("roundtrip");
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t w = 1 + uniform_index(rng, 20), h = 1 + uniform_index(rng, 20);
    DepthImage d{w, h, std::vector<std::uint16_t>(w * h)};
    for (auto& v : d.values) v = static_cast<std::uint16_t>(uniform_index(rng, 65536));
    RgbImage c{w, h, std::vector<std::uint8_t>(w * h * 3)};
    for (auto& v : c.pixels) v = static_cast<std::uint8_t>(uniform_index(rng, 256));
    write_image(dir / "d.pgm", d);
    write_image(dir / "c.ppm", c);
    EXPECT_EQ(read_depth(dir / "d.pgm"), d);
    EXPECT_EQ(read_rgb(dir / "c.ppm"), c);
    EXPECT_EQ(encode_pgm(read_depth(dir / "d.pgm")), encode_pgm(d));
    EXPECT_EQ(encode_ppm(read_rgb(dir / "c.ppm")), encode_ppm(c));
  }
}

TEST(DepthToNormals, FlatPlaneFacesCamera) {
  Tensor n = depth_to_normals(plane(6, 5, [](auto, auto) { return 1234; }));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 6; ++c) {
      EXPECT_EQ(px(n, 0, r, c), 0.5);
      EXPECT_EQ(px(n, 1, r, c), 0.5);
      EXPECT_EQ(px(n, 2, r, c), 1.0);
    }
}

TEST(DepthToNormals, UnitSlopeMatchesClosedForm) {
  // Z(u, v) = u + 500 mm: normal (-1, 0, 1)/sqrt(2).
  Tensor n = depth_to_normals(plane(7, 6, [](auto, auto c) { return 500 + c; }));
  const double s = 1.0 / std::sqrt(2.0);
  for (std::size_t r = 1; r + 1 < 6; ++r)
    for (std::size_t c = 1; c + 1 < 7; ++c) {
      EXPECT_NEAR(px(n, 0, r, c), (1.0 - s) / 2.0, 1e-5);
      EXPECT_NEAR(px(n, 0, r, c), 0.14645, 1e-5);
      EXPECT_NEAR(px(n, 1, r, c), 0.5, 1e-5);
      EXPECT_NEAR(px(n, 2, r, c), 0.85355, 1e-5);
    }
}

TEST(DepthToNormals, HoleInFlatPlaneIsFlat) {
  auto d = plane(5, 5, [](auto, auto) { return 800; });
  d.values[2 * 5 + 2] = 0;
  Tensor n = depth_to_normals(d);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_EQ(px(n, 0, r, c), 0.5);
      EXPECT_EQ(px(n, 1, r, c), 0.5);
      EXPECT_EQ(px(n, 2, r, c), 1.0);
    }
}

TEST(DepthToNormals, RejectsTinyImage) {
  EXPECT_THROW(depth_to_normals(plane(2, 5, [](auto, auto) { return 1; })), ShapeError);
}

TEST(DepthToNormals, RandomDepthGivesUnitCameraFacingNormals) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto d = plane(9, 8, [&](auto, auto) {
      return bernoulli(rng, 0.1) ? 0 : static_cast<int>(uniform_index(rng, 65536));
    });
    Tensor n = depth_to_normals(d);
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 0; c < 9; ++c) {
        double norm2 = 0;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double e = px(n, ch, r, c);
          EXPECT_GE(e, 0.0);
          EXPECT_LE(e, 1.0);
          norm2 += std::pow(2 * e - 1, 2);
        }
        EXPECT_GE(px(n, 2, r, c), 0.5);
        EXPECT_NEAR(std::sqrt(norm2), 1.0, 1e-6);
      }
  }
}

TEST(Augment, DisabledIsBitIdentical) {
  Rng rng(1), draw(2);
  auto s = random_sample(rng, 6, 6);
  auto out = augment(s, draw, AugmentConfig::disabled());
  EXPECT_TRUE(out.rgb.bitwise_equal(s.rgb));
  EXPECT_TRUE(out.depth_encoded.bitwise_equal(s.depth_encoded));
  EXPECT_EQ(out.label, s.label);
}

TEST(Augment, FlipsAreInvolutions) {
  Rng rng(3);
  auto s = random_sample(rng, 5, 7);
  EXPECT_TRUE(flip_horizontal(flip_horizontal(s.rgb)).bitwise_equal(s.rgb));
  EXPECT_TRUE(flip_vertical(flip_vertical(s.rgb)).bitwise_equal(s.rgb));
  EXPECT_FALSE(flip_horizontal(s.rgb).bitwise_equal(s.rgb));
}

TEST(Augment, QuarterTurnSwapsExtentsAndComposes) {
  Rng rng(4);
  auto s = random_sample(rng, 4, 6);
  Tensor r1 = rotate90(s.rgb, 1);
  EXPECT_EQ(r1.shape(), (Shape{3, 6, 4}));
  EXPECT_TRUE(rotate90(r1, 3).bitwise_equal(s.rgb));
  EXPECT_TRUE(rotate90(rotate90(s.rgb, 2), 2).bitwise_equal(s.rgb));
  // Top-left pixel moves to bottom-left under a counter-clockwise turn.
  EXPECT_EQ(px(r1, 0, 5, 0), px(s.rgb, 0, 0, 0));
}

TEST(Augment, PreservesShapeAndLabelAndIsSeeded) {
  Rng data(5);
  AugmentConfig all;
  for (auto [h, w] : {std::pair{8, 8}, {6, 10}}) {
    auto s = random_sample(data, h, w);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng a(seed), b(seed);
      auto x = augment(s, a, all), y = augment(s, b, all);
      EXPECT_EQ(x.rgb.shape(), s.rgb.shape());
      EXPECT_EQ(x.depth_encoded.shape(), s.depth_encoded.shape());
      EXPECT_EQ(x.label, s.label);
      EXPECT_TRUE(x.rgb.bitwise_equal(y.rgb));
      EXPECT_TRUE(x.depth_encoded.bitwise_equal(y.depth_encoded));
    }
  }
}

TEST(Augment, SameGeometryOnBothModalities) {
  Rng data(6);
  auto s = random_sample(data, 8, 8);
  s.depth_encoded = s.rgb.clone();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed);
    auto out = augment(s, r, AugmentConfig{});
    EXPECT_TRUE(out.rgb.bitwise_equal(out.depth_encoded));
  }
}

TEST(Augment, CenterFitCropsAndPads) {
  Tensor img = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  Tensor padded = center_fit(img, 4, 4);
  EXPECT_EQ(padded.shape(), (Shape{1, 4, 4}));
  EXPECT_EQ(px(padded, 0, 0, 0), 1.0);
  EXPECT_EQ(px(padded, 0, 3, 3), 4.0);
  EXPECT_TRUE(center_fit(padded, 2, 2).bitwise_equal(img));
}

TEST(Standardize, IdentityZerosAndRoundTrip) {
  Rng rng(8);
  auto s = random_sample(rng, 4, 5);
  EXPECT_TRUE(standardize(s.rgb, ChannelStats{}).bitwise_equal(s.rgb));
  Tensor half = Tensor::full({3, 2, 2}, 0.5);
  for (double v : standardize(half, {{0.5, 0.5, 0.5}, {0.2, 0.3, 0.4}}).to_vector()) EXPECT_EQ(v, 0.0);
  ChannelStats st{{0.1, 0.4, 0.7}, {0.3, 0.25, 2.0}};
  const auto back = unstandardize(standardize(s.rgb, st), st).to_vector();
  const auto orig = s.rgb.to_vector();
  for (std::size_t i = 0; i < orig.size(); ++i) EXPECT_NEAR(back[i], orig[i], 1e-6);
  EXPECT_THROW(standardize(s.rgb, {{0, 0, 0}, {1, 0, 1}}), ConfigError);
}

TEST(Standardize, StatsFromImages) {
  Tensor a = Tensor::from({3, 1, 2}, {0, 2, 1, 1, 5, 5});
  auto st = compute_channel_stats({a});
  EXPECT_DOUBLE_EQ(st.mean[0], 1.0);
  EXPECT_DOUBLE_EQ(st.std[0], 1.0);
  EXPECT_DOUBLE_EQ(st.std[1], 1.0);  // constant channel kept unscaled
  EXPECT_DOUBLE_EQ(st.mean[2], 5.0);
}

TEST(DatasetDir, WriteReadAndLabelOrder) {
  const fs::path root = temp_dir("dataset");
  RawDataset data;
  data.class_names = {"a_mug", "b_bowl"};
  for (int k = 0; k < 4; ++k) {
    RawSample s;
    s.id = "s" + std::to_string(k);
    s.label = k % 2;
    s.rgb = {3, 3, std::vector<std::uint8_t>(27, static_cast<std::uint8_t>(k))};
    s.depth = {3, 3, std::vector<std::uint16_t>(9, static_cast<std::uint16_t>(900 + k))};
    data.samples.push_back(s);
  }
  write_dataset_dir(root, data);
  EXPECT_TRUE(is_split_dir(root));
  auto back = read_dataset_dir(root);
  EXPECT_EQ(back.class_names, data.class_names);
  ASSERT_EQ(back.samples.size(), 4u);
  EXPECT_EQ(back.samples[0].id, "s0");
  EXPECT_EQ(back.samples[1].id, "s2");
  EXPECT_EQ(back.samples[2].label, 1);
  EXPECT_EQ(back.samples[2].depth.values[0], 901);
  auto encoded = encode_sample(back.samples[0]);
  validate_sample(encoded, 2);

  fs::remove(root / "b_bowl" / "s1_depth.pgm");
  EXPECT_THROW(read_dataset_dir(root), FormatError);
}
