// SPDX-License-Identifier: Apache-2.0
#include "rcf/commands.hpp"

#include <chrono>
#include <fstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "rcf/errors.hpp"
#include "rcf/ops.hpp"
#include "rcf/random.hpp"

namespace rcf {

namespace fs = std::filesystem;

ExitCode exit_code_for(const std::exception& error) {
  if (dynamic_cast<const NumericError*>(&error)) return kExitNumeric;
  if (dynamic_cast<const FormatError*>(&error) || dynamic_cast<const ShapeError*>(&error) ||
      dynamic_cast<const fs::filesystem_error*>(&error))
    return kExitData;
  return kExitUsage;
}

// ---------------------------------------------------------------------------
// Data

namespace {

void check_against_model(const Dataset& data, std::size_t num_names, const RunConfig& config,
                         const std::string& source) {
  const std::size_t k = config.model.fusion.num_classes, hw = config.model.backbone.input_hw;
  if (num_names != k)
    throw ShapeError(source + " has " + std::to_string(num_names) +
                     " classes but fusion.num_classes is " + std::to_string(k));
  for (const auto& s : data) {
    validate_sample(s, k);
    if (s.rgb.dim(1) != hw || s.rgb.dim(2) != hw)
      throw ShapeError(source + " holds " + std::to_string(s.rgb.dim(1)) + "x" +
                       std::to_string(s.rgb.dim(2)) + " images but backbone.input_hw is " +
                       std::to_string(hw));
  }
}

}  // namespace

Dataset load_split(const RunConfig& config, Split split, std::vector<std::string>* class_names) {
  if (config.uses_synth()) {
    if (class_names) {
      class_names->clear();
      for (std::size_t s = 0; s < config.synth.num_shapes; ++s)
        for (std::size_t c = 0; c < config.synth.num_hues; ++c)
          class_names->push_back(synth_class_name(s, c, config.synth.num_hues));
    }
    return generate_dataset(config.synth, split);
  }

  const fs::path root(config.data);
  fs::path dir = root / std::string(to_string(split));
  if (!is_split_dir(dir)) {
    if (split == Split::train && is_split_dir(root)) {
      dir = root;
    } else if (split == Split::test && (is_split_dir(root / "train") || is_split_dir(root))) {
      if (class_names) class_names->clear();
      return {};
    } else {
      throw FormatError(root.string() + " has no " + std::string(to_string(split)) +
                        " split in the image directory layout");
    }
  }
  RawDataset raw = read_dataset_dir(dir);
  Dataset data = encode_dataset(raw);
  check_against_model(data, raw.class_names.size(), config, dir.string());
  if (class_names) *class_names = std::move(raw.class_names);
  return data;
}

DataSplits load_data(const RunConfig& config) {
  DataSplits out;
  out.train = load_split(config, Split::train, &out.class_names);
  std::vector<std::string> test_names;
  out.test = load_split(config, Split::test, &test_names);
  if (!out.test.empty() && test_names != out.class_names)
    throw FormatError("train and test splits have different class directories");
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

Tensor stats_tensor(const std::array<double, 3>& v) {
  return Tensor::from({3}, std::span<const double>(v), DType::f64);
}

std::array<double, 3> stats_values(const Tensor& t) {
  const auto v = t.to_vector();
  return {v.at(0), v.at(1), v.at(2)};
}

}  // namespace

std::vector<CheckpointEntry> learner_checkpoint(const Learner& learner) {
  std::vector<CheckpointEntry> out;
  for (const auto& p : learner.model.parameters()) out.push_back({p.name, p.tensor});
  out.push_back({"norm.rgb.mean", stats_tensor(learner.norm.rgb.mean)});
  out.push_back({"norm.rgb.std", stats_tensor(learner.norm.rgb.std)});
  out.push_back({"norm.depth.mean", stats_tensor(learner.norm.depth.mean)});
  out.push_back({"norm.depth.std", stats_tensor(learner.norm.depth.std)});
  return out;
}

void restore_learner(Learner& learner, std::span<const CheckpointEntry> entries) {
  std::vector<CheckpointEntry> expected = learner_checkpoint(learner);
  if (entries.size() != expected.size())
    throw ShapeError("checkpoint has " + std::to_string(entries.size()) +
                     " entries but the configured model needs " +
                     std::to_string(expected.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Tensor& src = entries[i].tensor;
    Tensor& dst = expected[i].tensor;
    if (entries[i].name != expected[i].name)
      throw ShapeError("checkpoint entry " + std::to_string(i) + " is '" + entries[i].name +
                       "', expected '" + expected[i].name + "'");
    if (src.shape() != dst.shape() || src.dtype() != dst.dtype())
      throw ShapeError("checkpoint entry '" + entries[i].name + "' is " +
                       shape_str(src.shape()) + " " + std::string(to_string(src.dtype())) +
                       ", the model has " + shape_str(dst.shape()) + " " +
                       std::string(to_string(dst.dtype())));
    dispatch(src.dtype(), [&](auto tag) {
      using T = decltype(tag);
      std::ranges::copy(src.data<T>(), dst.data<T>().begin());
    });
  }
  auto at = [&](std::size_t back) { return stats_values(entries[entries.size() - back].tensor); };
  learner.norm.rgb = {at(4), at(3)};
  learner.norm.depth = {at(2), at(1)};
}

fs::path config_sidecar(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p += ".cfg";
  return p;
}

Learner load_learner(const fs::path& checkpoint, RunConfig* config) {
  const auto entries = load_checkpoint(checkpoint);
  const RunConfig cfg = load_run_config(config_sidecar(checkpoint));
  cfg.model.validate();
  Rng rng(cfg.train.seed);
  Learner learner = Learner::create(RcFusion::build(cfg.model, rng), InputNorm{});
  restore_learner(learner, entries);
  if (config) *config = cfg;
  return learner;
}

// ---------------------------------------------------------------------------
// train

TrainReport cmd_train(const RunConfig& config, const fs::path& checkpoint,
                      const fs::path& metrics_csv, std::ostream& log) {
  config.validate();
  const DataSplits data = load_data(config);
  fmt::print(log, "train: {} samples, test: {} samples, {} classes, head {}, modality {}\n",
             data.train.size(), data.test.size(), data.class_names.size(),
             to_string(config.model.head), to_string(config.model.modality));

  std::ofstream csv(metrics_csv, std::ios::trunc);
  if (!csv) throw FormatError("cannot write metrics " + metrics_csv.string());
  csv << "epoch,loss,train_acc,val_acc\n";
  auto on_epoch = [&](const EpochRecord& r) {
    const std::string val = r.val_accuracy ? fmt::format("{}", *r.val_accuracy) : "";
    csv << fmt::format("{},{},{},{}\n", r.epoch, r.loss, r.train_accuracy, val) << std::flush;
    fmt::print(log, "epoch {:3d}  loss {:.4f}  train_acc {:.4f}{}\n", r.epoch, r.loss,
               r.train_accuracy, r.val_accuracy ? fmt::format("  val_acc {:.4f}", *r.val_accuracy) : "");
  };
  FitResult fitted = fit(config.model, data.train, data.test.empty() ? nullptr : &data.test,
                         config.train, on_epoch);
  if (!csv) throw FormatError("short write to " + metrics_csv.string());

  TrainReport report;
  report.history = fitted.history;
  report.chosen_start = fitted.chosen_start;
  report.chosen_seed = candidate_seed(config.train.seed, fitted.chosen_start);
  fmt::print(log, "multi-start kept candidate {} of {}\n", fitted.chosen_start,
             config.train.multi_start_k);
  if (!data.test.empty()) {
    report.test = evaluate(fitted.learner, data.test, config.train.batch_size);
    fmt::print(log, "test accuracy {:.4f}\n", report.test->accuracy);
  }
  save_checkpoint(checkpoint, learner_checkpoint(fitted.learner));
  save_run_config(config_sidecar(checkpoint), config);
  return report;
}

// ---------------------------------------------------------------------------
// eval

void write_confusion_csv(const fs::path& path, const EvalResult& result,
                         std::span<const std::string> class_names) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "class";
  for (const auto& name : class_names) out << ',' << name;
  out << '\n';
  for (std::size_t t = 0; t < result.confusion.size(); ++t) {
    out << class_names[t];
    for (std::size_t count : result.confusion[t]) out << ',' << count;
    out << '\n';
  }
  if (!out) throw FormatError("short write to " + path.string());
}

EvalReport cmd_eval(const fs::path& checkpoint, const std::optional<std::string>& data,
                    Split split, const std::optional<fs::path>& confusion_csv, std::ostream& log) {
  RunConfig config;
  Learner learner = load_learner(checkpoint, &config);
  if (data) config.data = *data;
  EvalReport report;
  const Dataset samples = load_split(config, split, &report.class_names);
  if (samples.empty())
    throw FormatError("no " + std::string(to_string(split)) + " split in " + config.data);
  report.result = evaluate(learner, samples, config.train.batch_size);

  fmt::print(log, "{} split: {} samples, accuracy {:.4f}, loss {:.4f}\n", to_string(split),
             samples.size(), report.result.accuracy, report.result.loss);
  for (std::size_t k = 0; k < report.class_names.size(); ++k)
    fmt::print(log, "  {:<24} {:7.2f}%  (n={})\n", report.class_names[k],
               100.0 * report.result.per_class_accuracy[k], report.result.support[k]);
  if (confusion_csv) write_confusion_csv(*confusion_csv, report.result, report.class_names);
  return report;
}

// ---------------------------------------------------------------------------
// ablate

std::vector<AblationRow> cmd_ablate(const RunConfig& config, std::span<const Head> variants,
                                    const fs::path& csv, std::ostream& log) {
  if (variants.empty()) throw ConfigError("no ablation variants given");
  config.validate();
  if (config.model.modality != Modality::rgbd)
    throw ConfigError("ablation compares fusion heads and needs modality rgbd");
  const DataSplits data = load_data(config);
  if (data.test.empty()) throw FormatError("ablation needs a test split");

  std::vector<AblationRow> rows;
  for (Head head : variants) {
    RunConfig run = config;
    run.model.head = head;
    fmt::print(log, "variant {}: sequence length {}\n", to_string(head),
               run.model.sequence_length());
    FitResult fitted = fit(run.model, data.train, nullptr, run.train);
    AblationRow row;
    row.head = head;
    row.sequence_length = run.model.sequence_length();
    row.head_parameters = fitted.learner.model.head_parameter_count();
    row.final_loss = fitted.history.back().loss;
    row.train_accuracy = fitted.history.back().train_accuracy;
    row.test_accuracy = evaluate(fitted.learner, data.test, run.train.batch_size).accuracy;
    fmt::print(log, "variant {}: head parameters {}, test accuracy {:.4f}\n", to_string(head),
               row.head_parameters, row.test_accuracy);
    rows.push_back(row);
  }

  const auto find = [&](Head h) -> const AblationRow* {
    for (const auto& r : rows)
      if (r.head == h) return &r;
    return nullptr;
  };
  if (const auto *gru = find(Head::gru), *fc = find(Head::fc); gru && fc)
    fmt::print(log, "head parameters: fc {} vs full {} ({} levels)\n", fc->head_parameters,
               gru->head_parameters, gru->sequence_length);

  std::ofstream out(csv, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + csv.string());
  out << "variant,sequence_length,head_parameters,final_loss,train_acc,test_acc\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{},{},{}\n", to_string(r.head), r.sequence_length,
                       r.head_parameters, r.final_loss, r.train_accuracy, r.test_accuracy);
  if (!out) throw FormatError("short write to " + csv.string());
  return rows;
}

// ---------------------------------------------------------------------------
// gradcheck

ModelConfig gradcheck_model(const ModelConfig& base) {
  ModelConfig c = base;
  c.dtype = DType::f64;
  c.backbone.input_hw = 8;
  c.backbone.stem_channels = 2;
  c.backbone.num_blocks = 2;
  c.fusion.projection_depth = 8;
  c.fusion.memory_neurons = 4;
  c.fusion.num_classes = 3;
  return c;
}

GradcheckReport cmd_gradcheck(const ModelConfig& base, std::uint64_t seed, std::ostream& log) {
  GradcheckReport report;
  report.model = gradcheck_model(base);
  report.model.validate();
  const auto start = std::chrono::steady_clock::now();

  Rng rng(seed);
  RcFusion model = RcFusion::build(report.model, rng);
  const std::size_t hw = report.model.backbone.input_hw;
  auto image = [&] {
    std::vector<double> v(2 * 3 * hw * hw);
    for (auto& x : v) x = uniform01(rng);
    return Tensor::from({2, 3, hw, hw}, v, DType::f64);
  };
  const Tensor rgb = image(), depth = image();
  const std::vector<std::int32_t> labels{0, static_cast<std::int32_t>(report.model.fusion.num_classes - 1)};
  auto loss = [&] {
    return softmax_cross_entropy(model.logits(rgb, depth, Mode::train), labels).loss;
  };
  const ParamList params = trainable(model.parameters());
  // Some gradients here are ~1e-7; extrapolated differences resolve them to
  // well under 1e-4 relative where a plain central difference cannot.
  report.result = grad_check(loss, params, {.eps = 2e-4, .extrapolate = true});
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  fmt::print(log, "gradcheck head {}: {} parameters in {} tensors, {} checked, {} near kinks\n",
             to_string(report.model.head), count_elements(params), params.size(),
             report.result.checked, report.result.skipped_kinks);
  fmt::print(log, "max relative error {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e})\n",
             report.result.max_rel_error, report.result.worst_param, report.result.worst_index,
             report.result.worst_analytic, report.result.worst_numeric);
  fmt::print(log, "{} in {:.1f} s\n", report.result.passed ? "PASS" : "FAIL", report.seconds);
  return report;
}

// ---------------------------------------------------------------------------
// gendata

void cmd_gendata(const SynthConfig& config, const fs::path& out, std::ostream& log) {
  config.validate();
  for (Split split : {Split::train, Split::test}) {
    const RawDataset raw = generate_raw(config, split);
    const fs::path dir = out / std::string(to_string(split));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw FormatError("cannot create " + dir.string() + ": " + ec.message());
    write_dataset_dir(dir, raw);
    fmt::print(log, "{}: {} samples in {} classes -> {}\n", to_string(split), raw.samples.size(),
               raw.class_names.size(), dir.string());
  }
}

}  // namespace rcf
