// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rcf/checkpoint.hpp"
#include "rcf/grad_check.hpp"
#include "rcf/run_config.hpp"
#include "rcf/trainer.hpp"

namespace rcf {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,    // bad flags or configuration
  kExitData = 2,     // unreadable, corrupted or mismatched files
  kExitNumeric = 3,  // NaN / Inf, or a failed gradient check
};

/// ConfigError -> usage, FormatError / ShapeError / filesystem -> data,
/// NumericError -> numeric; anything else -> usage.
ExitCode exit_code_for(const std::exception& error);

// ---------------------------------------------------------------------------
// Data

struct DataSplits {
  Dataset train;
  Dataset test;  // empty when the source has no test split
  std::vector<std::string> class_names;
};

/**
 * Synthetic data, or a directory with `train/` and optionally `test/` in the
 * image directory layout (a directory that is itself a split is read as
 * train only). Throws ShapeError when class count or image size disagrees
 * with the model.
 */
DataSplits load_data(const RunConfig& config);

/// One split of a directory source ("train" or "test"), or of the synthetic set.
Dataset load_split(const RunConfig& config, Split split, std::vector<std::string>* class_names);

// ---------------------------------------------------------------------------
// Checkpoints of trained models

/// Model parameters and buffers by name, plus the input statistics as
/// norm.{rgb,depth}.{mean,std}.
std::vector<CheckpointEntry> learner_checkpoint(const Learner& learner);

/// Copies checkpoint values into `learner`. Every entry must be present with
/// the same shape and dtype, else ShapeError.
void restore_learner(Learner& learner, std::span<const CheckpointEntry> entries);

/// The run configuration stored next to a checkpoint.
std::filesystem::path config_sidecar(const std::filesystem::path& checkpoint);

/// Rebuilds the model described by the sidecar and loads the checkpoint.
Learner load_learner(const std::filesystem::path& checkpoint, RunConfig* config = nullptr);

// ---------------------------------------------------------------------------
// Commands

struct TrainReport {
  std::vector<EpochRecord> history;
  std::size_t chosen_start = 0;
  std::uint64_t chosen_seed = 0;
  std::optional<EvalResult> test;
};

/**
 * multi_start plus full training. Writes the checkpoint, its config sidecar
 * and a metrics CSV with header `epoch,loss,train_acc,val_acc` (val_acc is
 * empty without a test split).
 */
TrainReport cmd_train(const RunConfig& config, const std::filesystem::path& checkpoint,
                      const std::filesystem::path& metrics_csv, std::ostream& log);

struct EvalReport {
  EvalResult result;
  std::vector<std::string> class_names;
};

/// Evaluates a checkpoint on one split. `data` overrides the source stored
/// in the sidecar. Writes a K x K confusion CSV when a path is given.
EvalReport cmd_eval(const std::filesystem::path& checkpoint, const std::optional<std::string>& data,
                    Split split, const std::optional<std::filesystem::path>& confusion_csv,
                    std::ostream& log);

void write_confusion_csv(const std::filesystem::path& path, const EvalResult& result,
                         std::span<const std::string> class_names);

struct AblationRow {
  Head head = Head::gru;
  std::size_t sequence_length = 0;
  std::size_t head_parameters = 0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Trains and evaluates each head under the same seed and data. The CSV
/// has header `variant,sequence_length,head_parameters,final_loss,train_acc,test_acc`.
std::vector<AblationRow> cmd_ablate(const RunConfig& config, std::span<const Head> variants,
                                    const std::filesystem::path& csv, std::ostream& log);

struct GradcheckReport {
  ModelConfig model;
  GradCheckResult result;
  double seconds = 0.0;
};

/// The configuration gradient checks run on: `base` with f64, two blocks,
/// stem 2, D = 8, M = 4, K = 3 and 8x8 inputs. Head, biases, level order
/// and channel multiplier are kept.
ModelConfig gradcheck_model(const ModelConfig& base);

/// Gradient check of every trainable parameter of gradcheck_model(base) on a
/// random two-sample batch, BN in train mode.
GradcheckReport cmd_gradcheck(const ModelConfig& base, std::uint64_t seed, std::ostream& log);

/// Writes `out/train` and `out/test` in the image directory layout.
void cmd_gendata(const SynthConfig& config, const std::filesystem::path& out, std::ostream& log);

}  // namespace rcf
