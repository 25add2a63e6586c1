// SPDX-License-Identifier: Apache-2.0
#include "rcf/dataset_io.hpp"

#include <algorithm>
#include <map>

#include "rcf/depth_encoding.hpp"

namespace fs = std::filesystem;

namespace rcf {

namespace {

constexpr std::string_view kRgbSuffix = "_rgb.ppm";
constexpr std::string_view kDepthSuffix = "_depth.pgm";

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

bool is_split_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) return false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(entry.path()))
      if (ends_with(f.path().filename().string(), kRgbSuffix)) return true;
  }
  return false;
}

RawDataset read_dataset_dir(const fs::path& root) {
  if (!fs::is_directory(root)) throw FormatError("dataset directory not found: " + root.string());
  RawDataset data;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) data.class_names.push_back(entry.path().filename().string());
  std::sort(data.class_names.begin(), data.class_names.end());
  if (data.class_names.empty()) throw FormatError("no class directories in " + root.string());

  for (std::size_t label = 0; label < data.class_names.size(); ++label) {
    const fs::path dir = root / data.class_names[label];
    std::map<std::string, int> seen;  // id -> bit 1 rgb, bit 2 depth
    for (const auto& f : fs::directory_iterator(dir)) {
      const std::string name = f.path().filename().string();
      if (ends_with(name, kRgbSuffix))
        seen[name.substr(0, name.size() - kRgbSuffix.size())] |= 1;
      else if (ends_with(name, kDepthSuffix))
        seen[name.substr(0, name.size() - kDepthSuffix.size())] |= 2;
    }
    for (const auto& [id, mask] : seen) {
      if (mask != 3)
        throw FormatError("unpaired sample '" + id + "' in " + dir.string());
      RawSample s;
      s.id = id;
      s.rgb = read_rgb(dir / (id + std::string(kRgbSuffix)));
      s.depth = read_depth(dir / (id + std::string(kDepthSuffix)));
      if (s.rgb.width != s.depth.width || s.rgb.height != s.depth.height)
        throw FormatError("rgb/depth size mismatch for '" + id + "' in " + dir.string());
      s.label = static_cast<std::int32_t>(label);
      data.samples.push_back(std::move(s));
    }
  }
  return data;
}

void write_dataset_dir(const fs::path& root, const RawDataset& data) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw FormatError("cannot create " + root.string() + ": " + ec.message());
  for (const auto& name : data.class_names) {
    fs::create_directories(root / name, ec);
    if (ec) throw FormatError("cannot create " + (root / name).string() + ": " + ec.message());
  }
  for (const auto& s : data.samples) {
    const fs::path dir = root / data.class_names.at(static_cast<std::size_t>(s.label));
    write_image(dir / (s.id + std::string(kRgbSuffix)), s.rgb);
    write_image(dir / (s.id + std::string(kDepthSuffix)), s.depth);
  }
}

RgbdSample encode_sample(const RawSample& raw) {
  return {rgb_to_tensor(raw.rgb), depth_to_normals(raw.depth), raw.label};
}

Dataset encode_dataset(const RawDataset& raw) {
  Dataset out;
  out.reserve(raw.samples.size());
  for (const auto& s : raw.samples) out.push_back(encode_sample(s));
  return out;
}

}  // namespace rcf
