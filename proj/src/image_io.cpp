// SPDX-License-Identifier: Apache-2.0
#include "rcf/image_io.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

namespace rcf {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t read_number(const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw FormatError(std::string("image header: ") + what + " too large");
    }
    if (digits == 0) throw FormatError(std::string("image header: missing ") + what);
    return value;
  }

  /// Exactly one whitespace byte separates maxval from the raster.
  void end_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
      throw FormatError("image header: expected whitespace after maxval");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

void append_header(std::vector<std::uint8_t>& out, const char* magic, std::size_t w,
                   std::size_t h, unsigned maxval) {
  const std::string header = std::string(magic) + "\n" + std::to_string(w) + " " +
                             std::to_string(h) + "\n" + std::to_string(maxval) + "\n";
  out.insert(out.end(), header.begin(), header.end());
}

}  // namespace

Image parse_image(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P')
    throw FormatError("unsupported image magic: not a PNM file");
  const char kind = static_cast<char>(bytes[1]);
  if (kind != '5' && kind != '6')
    throw FormatError(std::string("unsupported image magic: P") + kind);

  HeaderReader reader(bytes);
  reader.advance(2);
  const std::size_t width = reader.read_number("width");
  const std::size_t height = reader.read_number("height");
  const std::size_t maxval = reader.read_number("maxval");
  reader.end_header();
  if (width == 0 || height == 0) throw FormatError("image header: zero dimension");
  if (maxval == 0 || maxval > 65535) throw FormatError("image header: maxval out of range");

  const std::size_t pixels = width * height;
  const std::uint8_t* raster = bytes.data() + reader.pos();
  const std::size_t available = bytes.size() - reader.pos();

  if (kind == '6') {
    if (maxval != 255) throw FormatError("P6 images must have maxval 255");
    if (available < pixels * 3) throw FormatError("truncated P6 payload");
    RgbImage img{width, height, std::vector<std::uint8_t>(raster, raster + pixels * 3)};
    return img;
  }
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  if (available < pixels * sample_bytes) throw FormatError("truncated P5 payload");
  DepthImage img{width, height, std::vector<std::uint16_t>(pixels)};
  for (std::size_t i = 0; i < pixels; ++i)
    img.values[i] = sample_bytes == 2
                        ? static_cast<std::uint16_t>((raster[2 * i] << 8) | raster[2 * i + 1])
                        : raster[i];
  return img;
}

Image read_image(const std::filesystem::path& path) { return parse_image(slurp(path)); }

DepthImage read_depth(const std::filesystem::path& path) {
  auto img = read_image(path);
  if (auto* d = std::get_if<DepthImage>(&img)) return std::move(*d);
  throw FormatError(path.string() + " is not a depth (P5) image");
}

RgbImage read_rgb(const std::filesystem::path& path) {
  auto img = read_image(path);
  if (auto* c = std::get_if<RgbImage>(&img)) return std::move(*c);
  throw FormatError(path.string() + " is not an RGB (P6) image");
}

std::vector<std::uint8_t> encode_pgm(const DepthImage& image) {
  std::vector<std::uint8_t> out;
  append_header(out, "P5", image.width, image.height, 65535);
  out.reserve(out.size() + image.values.size() * 2);
  for (auto v : image.values) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  std::vector<std::uint8_t> out;
  append_header(out, "P6", image.width, image.height, 255);
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_image(const std::filesystem::path& path, const DepthImage& image) {
  dump(path, encode_pgm(image));
}

void write_image(const std::filesystem::path& path, const RgbImage& image) {
  dump(path, encode_ppm(image));
}

Tensor rgb_to_tensor(const RgbImage& image) {
  const std::size_t h = image.height, w = image.width;
  Tensor t = Tensor::zeros({3, h, w});
  auto out = t.data<float>();
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      out[c * h * w + i] = static_cast<float>(image.pixels[i * 3 + c]) / 255.0f;
  return t;
}

}  // namespace rcf
