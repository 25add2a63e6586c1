// SPDX-License-Identifier: Apache-2.0
#include "rcf/synth.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "rcf/random.hpp"

namespace rcf {

namespace {

constexpr std::uint8_t kBackgroundGray = 128;
constexpr double kObjectExtent = 0.25;  // half-size of a shape, fraction of the image
constexpr double kMaxShift = 0.10;      // translation range, fraction of the image

std::uint64_t split_tag(Split split) { return split == Split::train ? 1 : 2; }

}  // namespace

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

void SynthConfig::validate() const {
  if (num_shapes < 2 || num_hues < 2) throw ConfigError("synthetic data needs S >= 2 and C >= 2");
  if (num_shapes > kShapeNames.size())
    throw ConfigError("S = " + std::to_string(num_shapes) + " exceeds the " +
                      std::to_string(kShapeNames.size()) + " available shapes");
  if (image_size < 8) throw ConfigError("synthetic images must be at least 8x8");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
    throw ConfigError("noise_std must be a non-negative number");
}

std::size_t SynthConfig::per_class(Split split) const {
  return split == Split::train ? train_per_class : test_per_class;
}

std::string synth_class_name(std::size_t shape, std::size_t hue, std::size_t num_hues) {
  return fmt::format("c{:03d}_{}_h{}", shape * num_hues + hue, kShapeNames.at(shape), hue);
}

bool shape_contains(std::size_t shape, double x, double y) {
  const double ax = std::abs(x), ay = std::abs(y);
  const double r = std::hypot(x, y);
  switch (shape) {
    case 0: return r <= 1.0;                             // disc
    case 1: return ax <= 0.85 && ay <= 0.85;             // square
    case 2:                                              // triangle, apex up
      return y >= -0.8 && y <= 1.0 && ax <= (1.0 - y) * 0.6;
    case 3: return r <= 1.0 && r >= 0.55;                // ring
    case 4: return (ax <= 0.3 && ay <= 1.0) || (ay <= 0.3 && ax <= 1.0);  // cross
    case 5: return ax + ay <= 1.0;                       // diamond
    default: throw ConfigError("unknown shape index " + std::to_string(shape));
  }
}

std::array<std::uint8_t, 3> hue_color(std::size_t hue, std::size_t num_hues) {
  // HSV with s = v = 1
  const double h = 6.0 * static_cast<double>(hue) / static_cast<double>(num_hues);
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = 1, g = x; break;
    case 1: r = x, g = 1; break;
    case 2: g = 1, b = x; break;
    case 3: g = x, b = 1; break;
    case 4: r = x, b = 1; break;
    default: r = 1, b = x; break;
  }
  auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(v * 255.0)); };
  return {q(r), q(g), q(b)};
}

namespace {

struct Placement {
  double cx, cy;  // pixel coordinates of the shape center
  double half;    // shape half-size in pixels
};

Placement random_placement(std::size_t size, Rng& rng) {
  const double s = static_cast<double>(size);
  const double center = (s - 1.0) / 2.0;
  return {center + uniform(rng, -kMaxShift, kMaxShift) * s,
          center + uniform(rng, -kMaxShift, kMaxShift) * s, kObjectExtent * s};
}

template <typename Inside>
void for_each_pixel(std::size_t size, const Placement& p, Inside&& body) {
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c)
      body(r, c, (static_cast<double>(c) - p.cx) / p.half,
           (p.cy - static_cast<double>(r)) / p.half);
}

RgbImage render_rgb(std::size_t hue, const SynthConfig& config, Rng& rng) {
  const std::size_t n = config.image_size;
  RgbImage img{n, n, std::vector<std::uint8_t>(3 * n * n, kBackgroundGray)};
  const auto color = hue_color(hue, config.num_hues);
  const Placement p = random_placement(n, rng);
  for_each_pixel(n, p, [&](std::size_t r, std::size_t c, double x, double y) {
    const bool inside = shape_contains(0, x, y);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double base = inside ? color[ch] : kBackgroundGray;
      const double noisy = base + 255.0 * config.noise_std * normal(rng);
      img.pixels[3 * (r * n + c) + ch] =
          static_cast<std::uint8_t>(std::clamp(std::lround(noisy), 0L, 255L));
    }
  });
  return img;
}

DepthImage render_depth(std::size_t shape, const SynthConfig& config, Rng& rng) {
  const std::size_t n = config.image_size;
  DepthImage img{n, n, std::vector<std::uint16_t>(n * n, kBackgroundDepthMm)};
  const Placement p = random_placement(n, rng);
  for_each_pixel(n, p, [&](std::size_t r, std::size_t c, double x, double y) {
    const double base = shape_contains(shape, x, y) ? kBackgroundDepthMm - kObjectHeightMm
                                                     : kBackgroundDepthMm;
    const double noisy = base + kDepthNoiseMm * config.noise_std * normal(rng);
    img.values[r * n + c] = static_cast<std::uint16_t>(std::clamp(std::lround(noisy), 1L, 65535L));
  });
  return img;
}

}  // namespace

RawSample render_sample(const SynthConfig& config, std::size_t shape, std::size_t hue,
                        std::uint64_t seed) {
  Rng rng(seed);
  RawSample sample;
  sample.label = static_cast<std::int32_t>(shape * config.num_hues + hue);
  sample.rgb = render_rgb(hue, config, rng);
  sample.depth = render_depth(shape, config, rng);
  return sample;
}

RawDataset generate_raw(const SynthConfig& config, Split split) {
  config.validate();
  RawDataset out;
  for (std::size_t s = 0; s < config.num_shapes; ++s)
    for (std::size_t c = 0; c < config.num_hues; ++c)
      out.class_names.push_back(synth_class_name(s, c, config.num_hues));

  const std::uint64_t split_seed = derive_seed(config.seed, split_tag(split));
  const std::size_t per_class = config.per_class(split);
  std::size_t index = 0;
  for (std::size_t s = 0; s < config.num_shapes; ++s)
    for (std::size_t c = 0; c < config.num_hues; ++c)
      for (std::size_t i = 0; i < per_class; ++i, ++index) {
        RawSample sample = render_sample(config, s, c, derive_seed(split_seed, index));
        sample.id = fmt::format("{}_{:05d}", to_string(split), index);
        out.samples.push_back(std::move(sample));
      }
  return out;
}

Dataset generate_dataset(const SynthConfig& config, Split split) {
  return encode_dataset(generate_raw(config, split));
}

std::pair<double, double> bayes_bounds(const SynthConfig& config) {
  config.validate();
  return {1.0 / static_cast<double>(config.num_shapes),
          1.0 / static_cast<double>(config.num_hues)};
}

}  // namespace rcf
