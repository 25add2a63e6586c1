// SPDX-License-Identifier: Apache-2.0
#include "rcf/augment.hpp"

#include <algorithm>
#include <cmath>

namespace rcf {

void validate_sample(const RgbdSample& sample, std::size_t num_classes) {
  if (sample.rgb.rank() != 3 || sample.rgb.dim(0) != 3)
    throw ShapeError("sample rgb must be 3xHxW, got " + shape_str(sample.rgb.shape()));
  if (sample.depth_encoded.shape() != sample.rgb.shape())
    throw ShapeError("sample depth " + shape_str(sample.depth_encoded.shape()) +
                     " does not match rgb " + shape_str(sample.rgb.shape()));
  if (sample.label < 0 || static_cast<std::size_t>(sample.label) >= num_classes)
    throw ShapeError("sample label " + std::to_string(sample.label) + " outside [0," +
                     std::to_string(num_classes) + ")");
}

namespace {

/// Builds an image of the given size where out(c, y, x) = in(c, src(y, x)).
template <typename Map>
Tensor remap(const Tensor& image, std::size_t out_h, std::size_t out_w, Map&& src) {
  const std::size_t ch = image.dim(0), in_w = image.dim(2), in_h = image.dim(1);
  Tensor out = Tensor::zeros({ch, out_h, out_w}, image.dtype());
  dispatch(image.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = image.data<T>();
    auto o = out.data<T>();
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
          const auto [sy, sx] = src(y, x);
          o[(c * out_h + y) * out_w + x] = in[(c * in_h + sy) * in_w + sx];
        }
  });
  return out;
}

void require_chw(const Tensor& image, const char* op) {
  if (image.rank() != 3)
    throw ShapeError(std::string(op) + ": expected CxHxW image, got " + shape_str(image.shape()));
}

}  // namespace

Tensor flip_horizontal(const Tensor& image) {
  require_chw(image, "flip_horizontal");
  const std::size_t h = image.dim(1), w = image.dim(2);
  return remap(image, h, w, [w](std::size_t y, std::size_t x) {
    return std::pair{y, w - 1 - x};
  });
}

Tensor flip_vertical(const Tensor& image) {
  require_chw(image, "flip_vertical");
  const std::size_t h = image.dim(1), w = image.dim(2);
  return remap(image, h, w, [h](std::size_t y, std::size_t x) {
    return std::pair{h - 1 - y, x};
  });
}

Tensor rotate90(const Tensor& image, int quarter_turns) {
  require_chw(image, "rotate90");
  const std::size_t h = image.dim(1), w = image.dim(2);
  switch (((quarter_turns % 4) + 4) % 4) {
    case 1:
      return remap(image, w, h, [w](std::size_t y, std::size_t x) {
        return std::pair{x, w - 1 - y};
      });
    case 2:
      return remap(image, h, w, [h, w](std::size_t y, std::size_t x) {
        return std::pair{h - 1 - y, w - 1 - x};
      });
    case 3:
      return remap(image, w, h, [h](std::size_t y, std::size_t x) {
        return std::pair{h - 1 - x, y};
      });
    default:
      return image.clone();
  }
}

Tensor resize_nearest(const Tensor& image, std::size_t height, std::size_t width) {
  require_chw(image, "resize_nearest");
  if (height == 0 || width == 0) throw ShapeError("resize_nearest: zero target size");
  const std::size_t h = image.dim(1), w = image.dim(2);
  return remap(image, height, width, [=](std::size_t y, std::size_t x) {
    const std::size_t sy = std::min(h - 1, (2 * y + 1) * h / (2 * height));
    const std::size_t sx = std::min(w - 1, (2 * x + 1) * w / (2 * width));
    return std::pair{sy, sx};
  });
}

Tensor center_fit(const Tensor& image, std::size_t height, std::size_t width) {
  require_chw(image, "center_fit");
  const long h = static_cast<long>(image.dim(1)), w = static_cast<long>(image.dim(2));
  const long off_y = (h - static_cast<long>(height)) / 2;
  const long off_x = (w - static_cast<long>(width)) / 2;
  return remap(image, height, width, [=](std::size_t y, std::size_t x) {
    const long sy = std::clamp(static_cast<long>(y) + off_y, 0L, h - 1);
    const long sx = std::clamp(static_cast<long>(x) + off_x, 0L, w - 1);
    return std::pair{static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)};
  });
}

RgbdSample augment(const RgbdSample& sample, Rng& rng, const AugmentConfig& config) {
  const double factor = uniform(rng, config.scale_min, config.scale_max);
  const bool do_h = bernoulli(rng, 0.5);
  const bool do_v = bernoulli(rng, 0.5);
  const int turns = static_cast<int>(uniform_index(rng, 4));

  const std::size_t h = sample.rgb.dim(1), w = sample.rgb.dim(2);
  const auto transform = [&](Tensor img) {
    if (config.scale) {
      const auto sh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(factor * h)));
      const auto sw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(factor * w)));
      if (sh != h || sw != w) img = center_fit(resize_nearest(img, sh, sw), h, w);
    }
    if (config.hflip && do_h) img = flip_horizontal(img);
    if (config.vflip && do_v) img = flip_vertical(img);
    if (config.rotate90 && turns != 0) {
      img = rotate90(img, turns);
      if (img.dim(1) != h || img.dim(2) != w) img = resize_nearest(img, h, w);
    }
    return img;
  };
  return {transform(sample.rgb), transform(sample.depth_encoded), sample.label};
}

Tensor standardize(const Tensor& image, const ChannelStats& stats) {
  require_chw(image, "standardize");
  if (image.dim(0) != 3) throw ShapeError("standardize: expected 3 channels");
  for (double s : stats.std)
    if (!(s > 0.0)) throw ConfigError("standardize: std must be positive");
  Tensor out = image.clone();
  const std::size_t plane = image.dim(1) * image.dim(2);
  dispatch(image.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = out.data<T>();
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        o[c * plane + i] = static_cast<T>((static_cast<double>(o[c * plane + i]) - stats.mean[c]) /
                                          stats.std[c]);
  });
  return out;
}

Tensor unstandardize(const Tensor& image, const ChannelStats& stats) {
  require_chw(image, "unstandardize");
  Tensor out = image.clone();
  const std::size_t plane = image.dim(1) * image.dim(2);
  dispatch(image.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto o = out.data<T>();
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        o[c * plane + i] =
            static_cast<T>(static_cast<double>(o[c * plane + i]) * stats.std[c] + stats.mean[c]);
  });
  return out;
}

ChannelStats compute_channel_stats(const std::vector<Tensor>& images) {
  ChannelStats stats;
  if (images.empty()) return stats;
  std::array<double, 3> sum{}, sq{};
  double count = 0;
  for (const auto& img : images) {
    const std::size_t plane = img.dim(1) * img.dim(2);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = img.at(c * plane + i);
        sum[c] += v;
        sq[c] += v * v;
      }
    count += static_cast<double>(plane);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    stats.mean[c] = sum[c] / count;
    const double var = std::max(0.0, sq[c] / count - stats.mean[c] * stats.mean[c]);
    // A constant channel carries no scale; keep it unscaled.
    stats.std[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return stats;
}

}  // namespace rcf
