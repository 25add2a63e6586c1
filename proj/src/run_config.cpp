// SPDX-License-Identifier: Apache-2.0
#include "rcf/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "rcf/errors.hpp"

namespace rcf {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// ---- value formatting / parsing, one overload per field type ----

std::string format_value(std::size_t v) { return std::to_string(v); }
std::string format_value(double v) { return fmt::format("{}", v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }
std::string format_value(Head v) { return std::string(to_string(v)); }
std::string format_value(Modality v) { return std::string(to_string(v)); }
std::string format_value(DType v) { return std::string(to_string(v)); }

template <typename T>
void parse_number(std::string_view text, T& out) {
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty())
    throw ConfigError("'" + std::string(text) + "' is not a valid number");
  out = value;
}

void parse_value(std::string_view text, std::size_t& out) { parse_number(text, out); }
void parse_value(std::string_view text, double& out) { parse_number(text, out); }
void parse_value(std::string_view text, std::string& out) {
  if (text.empty()) throw ConfigError("empty value");
  out = std::string(text);
}
void parse_value(std::string_view text, bool& out) {
  if (text == "true") out = true;
  else if (text == "false") out = false;
  else throw ConfigError("'" + std::string(text) + "' is not true or false");
}
void parse_value(std::string_view text, Head& out) { out = parse_head(text); }
void parse_value(std::string_view text, Modality& out) { out = parse_modality(text); }
void parse_value(std::string_view text, DType& out) {
  if (text == "f32") out = DType::f32;
  else if (text == "f64") out = DType::f64;
  else throw ConfigError("unknown dtype '" + std::string(text) + "' (expected f32|f64)");
}

struct Field {
  std::string_view key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

/// `ref` maps a (const or mutable) RunConfig to the member it names.
template <typename Ref>
Field field(std::string_view key, Ref ref) {
  return {key, [ref](const RunConfig& c) { return format_value(ref(c)); },
          [ref](RunConfig& c, std::string_view v) { parse_value(v, ref(c)); }};
}

#define RCF_FIELD(key, member) field(key, [](auto& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      RCF_FIELD("data", data),
      RCF_FIELD("model.head", model.head),
      RCF_FIELD("model.modality", model.modality),
      RCF_FIELD("model.dtype", model.dtype),
      RCF_FIELD("backbone.input_hw", model.backbone.input_hw),
      RCF_FIELD("backbone.stem_channels", model.backbone.stem_channels),
      RCF_FIELD("backbone.num_blocks", model.backbone.num_blocks),
      RCF_FIELD("backbone.channel_multiplier", model.backbone.channel_multiplier),
      RCF_FIELD("fusion.projection_depth", model.fusion.projection_depth),
      RCF_FIELD("fusion.memory_neurons", model.fusion.memory_neurons),
      RCF_FIELD("fusion.num_classes", model.fusion.num_classes),
      RCF_FIELD("fusion.gate_bias", model.fusion.gate_bias),
      RCF_FIELD("fusion.reverse_order", model.fusion.reverse_order),
      RCF_FIELD("train.batch_size", train.batch_size),
      RCF_FIELD("train.learning_rate", train.learning_rate),
      RCF_FIELD("train.momentum", train.momentum),
      RCF_FIELD("train.weight_decay", train.weight_decay),
      RCF_FIELD("train.max_grad_norm", train.max_grad_norm),
      RCF_FIELD("train.rms_decay", train.rms_decay),
      RCF_FIELD("train.eps", train.eps),
      RCF_FIELD("train.epochs", train.epochs),
      RCF_FIELD("train.multi_start_k", train.multi_start_k),
      RCF_FIELD("train.seed", train.seed),
      RCF_FIELD("augment.scale", train.augment.scale),
      RCF_FIELD("augment.scale_min", train.augment.scale_min),
      RCF_FIELD("augment.scale_max", train.augment.scale_max),
      RCF_FIELD("augment.hflip", train.augment.hflip),
      RCF_FIELD("augment.vflip", train.augment.vflip),
      RCF_FIELD("augment.rotate90", train.augment.rotate90),
      RCF_FIELD("synth.num_shapes", synth.num_shapes),
      RCF_FIELD("synth.num_hues", synth.num_hues),
      RCF_FIELD("synth.train_per_class", synth.train_per_class),
      RCF_FIELD("synth.test_per_class", synth.test_per_class),
      RCF_FIELD("synth.image_size", synth.image_size),
      RCF_FIELD("synth.noise_std", synth.noise_std),
      RCF_FIELD("synth.seed", synth.seed),
  };
  return table;
}

#undef RCF_FIELD

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (!uses_synth()) {
    if (data.empty()) throw ConfigError("data must be 'synth' or a directory");
    return;
  }
  synth.validate();
  if (synth.image_size != model.backbone.input_hw)
    throw ConfigError("synth.image_size (" + std::to_string(synth.image_size) +
                      ") must equal backbone.input_hw (" +
                      std::to_string(model.backbone.input_hw) + ")");
  if (synth.num_classes() != model.fusion.num_classes)
    throw ConfigError("synthetic data has " + std::to_string(synth.num_classes()) +
                      " classes but fusion.num_classes is " +
                      std::to_string(model.fusion.num_classes));
}

RunConfig parse_run_config(std::string_view text) {
  std::map<std::string_view, const Field*> by_key;
  for (const auto& f : fields()) by_key.emplace(f.key, &f);

  RunConfig config;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;

    const auto where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    if (const auto [prev, fresh] = seen.emplace(key, line_no); !fresh)
      throw ConfigError(where + "'" + std::string(key) + "' already set on line " +
                        std::to_string(prev->second));
    try {
      it->second->set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + std::string(key) + ": " + e.what());
    }
  }
  return config;
}

std::string render_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += fmt::format("{} = {}\n", f.key, f.get(config));
  return out;
}

std::vector<std::string_view> run_config_keys() {
  std::vector<std::string_view> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_run_config(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << render_run_config(config);
  if (!out) throw ConfigError("short write to " + path.string());
}

}  // namespace rcf
