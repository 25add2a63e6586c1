// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "rcf/augment.hpp"
#include "rcf/fusion.hpp"
#include "rcf/sample.hpp"

namespace rcf {

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0002;  // conv / linear weights only
  double max_grad_norm = 4.0;
  double rms_decay = 0.9;
  double eps = 1e-8;
  std::size_t epochs = 30;
  std::size_t multi_start_k = 3;
  std::uint64_t seed = 0;
  AugmentConfig augment = AugmentConfig::disabled();

  /// Rates may be zero (a frozen run); sizes and max_grad_norm must be positive.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Optimizer

/// Square-average (s) and momentum (v) buffers, one pair per parameter.
struct OptimizerState {
  std::vector<Tensor> square_avg;
  std::vector<Tensor> velocity;

  static OptimizerState init(const ParamList& params);
};

/**
 * One RMSprop-with-momentum update of every parameter in `params`, in place:
 *
 *   g ← grad + weight_decay·θ   (weights only)
 *   s ← ρ·s + (1 − ρ)·g²
 *   v ← µ·v + lr·g / sqrt(s + eps)
 *   θ ← θ − v
 *
 * A parameter without a gradient is treated as having a zero gradient.
 */
void rmsprop_step(const ParamList& params, OptimizerState& state, const TrainConfig& config);

/// Global L2 norm of all gradients in `params` (missing gradients count as 0).
double grad_norm(const ParamList& params);

/// Scales every gradient by max_norm / g when the global norm g exceeds
/// max_norm. Returns the scale applied (1 when unchanged).
double clip_grad_norm(const ParamList& params, double max_norm);

// ---------------------------------------------------------------------------
// Training

/// Per-modality channel statistics used to standardize network inputs.
struct InputNorm {
  ChannelStats rgb;
  ChannelStats depth;

  static InputNorm fit(const Dataset& data);
  bool operator==(const InputNorm&) const = default;
};

/// A model together with the input statistics and optimizer state it was
/// trained with.
struct Learner {
  RcFusion model;
  InputNorm norm;
  OptimizerState optimizer;

  /// Enables gradients on the model and allocates fresh optimizer state.
  static Learner create(RcFusion model, InputNorm norm);
};

struct Batch {
  Tensor rgb;    // N x 3 x H x W, standardized
  Tensor depth;  // N x 3 x H x W, standardized
  std::vector<std::int32_t> labels;
};

/// Stacks the given samples; `augment_rng` applies random augmentation.
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, const InputNorm& norm,
                 DType dtype, const AugmentConfig& augment = AugmentConfig::disabled(),
                 Rng* augment_rng = nullptr);

struct EpochMetrics {
  double loss = 0.0;      // sample-weighted mean over the epoch
  double accuracy = 0.0;  // of the train-mode predictions made during the epoch
  std::size_t steps = 0;
};

/// Shuffles, batches, and runs forward / loss / backward / clip / step for
/// every batch. BN runs in train mode.
EpochMetrics train_epoch(Learner& learner, const Dataset& data, const TrainConfig& config,
                         Rng& rng);

/// Same as train_epoch but always on the given batch (no shuffling).
EpochMetrics train_step(Learner& learner, const Batch& batch, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  std::vector<double> per_class_accuracy;  // 0 for classes without samples
  std::vector<std::size_t> support;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

EvalResult summarize_predictions(std::span<const std::int32_t> predicted,
                                 std::span<const std::int32_t> truth, std::size_t num_classes);

/// Eval-mode forward over `data` without augmentation or gradients.
EvalResult evaluate(Learner& learner, const Dataset& data, std::size_t batch_size = 64);

std::vector<std::int32_t> argmax_rows(const Tensor& scores);

// ---------------------------------------------------------------------------
// Initialization and full runs

using ModelFactory = std::function<RcFusion(std::uint64_t seed)>;

struct MultiStartResult {
  Learner learner;
  std::size_t chosen = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<EpochMetrics> candidates;
};

/// Seed of candidate i, used both to build the model and to order its data.
std::uint64_t candidate_seed(std::uint64_t base, std::size_t index);

/**
 * Builds k candidates with distinct seeds, trains each for one epoch and
 * keeps the one with the lowest end-of-epoch training loss (ties go to the
 * lower seed index).
 */
MultiStartResult multi_start(const ModelFactory& factory, std::size_t k, const Dataset& train,
                             const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct FitResult {
  Learner learner;
  std::vector<EpochRecord> history;
  std::size_t chosen_start = 0;
};

/// multi_start for the first epoch, then config.epochs − 1 further epochs.
FitResult fit(const ModelConfig& model_config, const Dataset& train, const Dataset* validation,
              const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace rcf
