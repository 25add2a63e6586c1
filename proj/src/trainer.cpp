// SPDX-License-Identifier: Apache-2.0
#include "rcf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rcf/tape.hpp"

namespace rcf {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(learning_rate >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0))
    throw ConfigError("learning_rate, momentum and weight_decay must be non-negative");
  if (!(max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be positive");
  if (!(rms_decay >= 0.0 && rms_decay < 1.0)) throw ConfigError("rms_decay must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (momentum >= 1.0) throw ConfigError("momentum must be below 1");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (multi_start_k < 1) throw ConfigError("multi_start_k must be positive");
}

// ---------------------------------------------------------------------------

OptimizerState OptimizerState::init(const ParamList& params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.square_avg.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
    s.velocity.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
  }
  return s;
}

void rmsprop_step(const ParamList& params, OptimizerState& state, const TrainConfig& config) {
  if (state.square_avg.size() != params.size() || state.velocity.size() != params.size())
    throw ShapeError("rmsprop_step: optimizer state holds " +
                     std::to_string(state.square_avg.size()) + " buffers for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor theta = params[i].tensor;
    Tensor& s_t = state.square_avg[i];
    Tensor& v_t = state.velocity[i];
    if (s_t.shape() != theta.shape() || v_t.shape() != theta.shape() ||
        s_t.dtype() != theta.dtype() || v_t.dtype() != theta.dtype())
      throw ShapeError("rmsprop_step: state for '" + params[i].name + "' does not match " +
                       shape_str(theta.shape()));
    const double wd = params[i].role == ParamRole::weight ? config.weight_decay : 0.0;
    dispatch(theta.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto w = theta.data<T>();
      auto s = s_t.data<T>();
      auto v = v_t.data<T>();
      std::span<const T> grad;
      if (theta.has_grad()) grad = theta.grad_data<T>();
      const T rho = static_cast<T>(config.rms_decay), mu = static_cast<T>(config.momentum);
      const T lr = static_cast<T>(config.learning_rate), eps = static_cast<T>(config.eps);
      const T decay = static_cast<T>(wd);
      for (std::size_t j = 0; j < w.size(); ++j) {
        T g = grad.empty() ? T(0) : grad[j];
        if (decay != T(0)) g += decay * w[j];
        s[j] = rho * s[j] + (T(1) - rho) * g * g;
        v[j] = mu * v[j] + lr * g / std::sqrt(s[j] + eps);
        w[j] -= v[j];
      }
    });
  }
}

double grad_norm(const ParamList& params) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    dispatch(p.tensor.dtype(), [&](auto tag) {
      using T = decltype(tag);
      for (T g : p.tensor.grad_data<T>()) total += static_cast<double>(g) * g;
    });
  }
  return std::sqrt(total);
}

double clip_grad_norm(const ParamList& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_grad_norm: max_norm must be positive");
  const double norm = grad_norm(params);
  if (!std::isfinite(norm)) throw NumericError("clip_grad_norm: gradient norm is not finite");
  if (norm <= max_norm) return 1.0;
  const double scale = max_norm / norm;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    Tensor t = p.tensor;
    dispatch(t.dtype(), [&](auto tag) {
      using T = decltype(tag);
      for (T& g : t.grad_data<T>()) g = static_cast<T>(g * scale);
    });
  }
  return scale;
}

// ---------------------------------------------------------------------------

InputNorm InputNorm::fit(const Dataset& data) {
  if (data.empty()) throw ConfigError("cannot compute input statistics of an empty dataset");
  std::vector<Tensor> rgb, depth;
  for (const auto& s : data) {
    rgb.push_back(s.rgb);
    depth.push_back(s.depth_encoded);
  }
  return {compute_channel_stats(rgb), compute_channel_stats(depth)};
}

Learner Learner::create(RcFusion model, InputNorm norm) {
  const ParamList params = trainable(model.parameters());
  enable_grads(params);
  Learner l{std::move(model), norm, OptimizerState::init(params)};
  return l;
}

namespace {

void copy_into(Tensor& dst, std::size_t offset, const Tensor& src) {
  dispatch(dst.dtype(), [&](auto dtag) {
    using D = decltype(dtag);
    auto out = dst.data<D>().subspan(offset, src.numel());
    dispatch(src.dtype(), [&](auto stag) {
      using S = decltype(stag);
      const auto in = src.data<S>();
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<D>(in[i]);
    });
  });
}

}  // namespace

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, const InputNorm& norm,
                 DType dtype, const AugmentConfig& augment_config, Rng* augment_rng) {
  if (indices.empty()) throw ShapeError("make_batch: no samples");
  const Shape item = data.at(indices.front()).rgb.shape();
  Shape shape = item;
  shape.insert(shape.begin(), indices.size());
  Batch b{Tensor::zeros(shape, dtype), Tensor::zeros(shape, dtype), {}};
  const std::size_t stride = shape_numel(item);
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const RgbdSample& raw = data.at(indices[n]);
    RgbdSample s = augment_rng ? augment(raw, *augment_rng, augment_config) : raw;
    if (s.rgb.shape() != item || s.depth_encoded.shape() != item)
      throw ShapeError("make_batch: sample " + std::to_string(indices[n]) + " has shape " +
                       shape_str(s.rgb.shape()) + ", batch expects " + shape_str(item));
    copy_into(b.rgb, n * stride, standardize(s.rgb, norm.rgb));
    copy_into(b.depth, n * stride, standardize(s.depth_encoded, norm.depth));
    b.labels.push_back(s.label);
  }
  return b;
}

std::vector<std::int32_t> argmax_rows(const Tensor& scores) {
  std::vector<std::int32_t> out;
  const std::size_t k = scores.dim(1);
  dispatch(scores.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const auto v = scores.data<T>();
    for (std::size_t n = 0; n < scores.dim(0); ++n) {
      const auto row = v.subspan(n * k, k);
      out.push_back(static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) -
                                              row.begin()));
    }
  });
  return out;
}

namespace {

struct StepOutcome {
  double loss;
  std::size_t correct;
};

StepOutcome run_step(Learner& learner, const Batch& batch, const TrainConfig& config) {
  const ParamList params = trainable(learner.model.parameters());
  Tape tape;
  LossResult result;
  {
    Tape::Recording rec(tape);
    const Tensor logits = learner.model.logits(batch.rgb, batch.depth, Mode::train);
    result = softmax_cross_entropy(logits, batch.labels);
  }
  const double loss = result.loss.item();
  if (!std::isfinite(loss)) throw NumericError("training loss is not finite");
  tape.backward(result.loss);
  clip_grad_norm(params, config.max_grad_norm);
  rmsprop_step(params, learner.optimizer, config);
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  const auto predicted = argmax_rows(result.probabilities);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == batch.labels[i];
  return {loss, correct};
}

}  // namespace

EpochMetrics train_step(Learner& learner, const Batch& batch, const TrainConfig& config) {
  const StepOutcome o = run_step(learner, batch, config);
  return {o.loss, static_cast<double>(o.correct) / static_cast<double>(batch.labels.size()), 1};
}

EpochMetrics train_epoch(Learner& learner, const Dataset& data, const TrainConfig& config,
                         Rng& rng) {
  config.validate();
  if (data.empty()) throw ConfigError("train_epoch: empty training data");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(order), rng);
  Rng augment_rng(rng());
  const bool augmenting = config.augment.scale || config.augment.hflip || config.augment.vflip ||
                          config.augment.rotate90;

  EpochMetrics m;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    const Batch batch = make_batch(data, idx, learner.norm, learner.model.config().dtype,
                                   config.augment, augmenting ? &augment_rng : nullptr);
    StepOutcome o;
    try {
      o = run_step(learner, batch, config);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(m.steps + 1) + " (samples " +
                         std::to_string(start) + ".." + std::to_string(end - 1) +
                         "): " + e.what());
    }
    loss_sum += o.loss * static_cast<double>(idx.size());
    correct += o.correct;
    ++m.steps;
  }
  m.loss = loss_sum / static_cast<double>(data.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return m;
}

// ---------------------------------------------------------------------------

EvalResult summarize_predictions(std::span<const std::int32_t> predicted,
                                 std::span<const std::int32_t> truth, std::size_t num_classes) {
  if (predicted.size() != truth.size())
    throw ShapeError("summarize_predictions: prediction and label counts differ");
  EvalResult r;
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  r.support.assign(num_classes, 0);
  r.per_class_accuracy.assign(num_classes, 0.0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]);
    const auto p = static_cast<std::size_t>(predicted[i]);
    if (t >= num_classes || p >= num_classes)
      throw ShapeError("summarize_predictions: class index out of range");
    ++r.confusion[t][p];
    ++r.support[t];
    correct += t == p;
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    if (r.support[c] > 0)
      r.per_class_accuracy[c] =
          static_cast<double>(r.confusion[c][c]) / static_cast<double>(r.support[c]);
  r.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
  return r;
}

EvalResult evaluate(Learner& learner, const Dataset& data, std::size_t batch_size) {
  if (batch_size < 1) throw ConfigError("evaluate: batch_size must be positive");
  std::vector<std::int32_t> predicted, truth;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = make_batch(data, idx, learner.norm, learner.model.config().dtype);
    const Tensor logits = learner.model.logits(batch.rgb, batch.depth, Mode::eval);
    const LossResult lr = softmax_cross_entropy(logits, batch.labels);
    loss_sum += lr.loss.item() * static_cast<double>(idx.size());
    const auto p = argmax_rows(logits);
    predicted.insert(predicted.end(), p.begin(), p.end());
    truth.insert(truth.end(), batch.labels.begin(), batch.labels.end());
  }
  EvalResult r =
      summarize_predictions(predicted, truth, learner.model.config().fusion.num_classes);
  r.loss = data.empty() ? 0.0 : loss_sum / static_cast<double>(data.size());
  return r;
}

// ---------------------------------------------------------------------------

std::uint64_t candidate_seed(std::uint64_t base, std::size_t index) {
  return derive_seed(base, 0x1000 + index);
}

namespace {

Rng epoch_rng(std::uint64_t model_seed, std::size_t epoch) {
  return Rng(derive_seed(model_seed, epoch));
}

}  // namespace

MultiStartResult multi_start(const ModelFactory& factory, std::size_t k, const Dataset& train,
                             const TrainConfig& config) {
  if (k < 1) throw ConfigError("multi_start: k must be at least 1");
  if (train.empty()) throw ConfigError("multi_start: empty training data");
  const InputNorm norm = InputNorm::fit(train);
  std::optional<Learner> best;
  MultiStartResult out{};
  for (std::size_t i = 0; i < k; ++i) {
    const std::uint64_t seed = candidate_seed(config.seed, i);
    Learner candidate = Learner::create(factory(seed), norm);
    Rng rng = epoch_rng(seed, 1);
    const EpochMetrics m = train_epoch(candidate, train, config, rng);
    out.seeds.push_back(seed);
    out.candidates.push_back(m);
    if (!best || m.loss < out.candidates[out.chosen].loss) {
      best = std::move(candidate);
      out.chosen = i;
    }
  }
  out.learner = std::move(*best);
  return out;
}

FitResult fit(const ModelConfig& model_config, const Dataset& train, const Dataset* validation,
              const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  for (const auto& s : train) validate_sample(s, model_config.fusion.num_classes);
  const ModelFactory factory = [&](std::uint64_t seed) {
    Rng rng(seed);
    return RcFusion::build(model_config, rng);
  };
  MultiStartResult start = multi_start(factory, config.multi_start_k, train, config);
  FitResult result{std::move(start.learner), {}, start.chosen};
  const std::uint64_t seed = start.seeds[start.chosen];

  auto record = [&](std::size_t epoch, const EpochMetrics& m) {
    EpochRecord r{epoch, m.loss, m.accuracy, std::nullopt};
    if (validation && !validation->empty())
      r.val_accuracy = evaluate(result.learner, *validation, config.batch_size).accuracy;
    result.history.push_back(r);
    if (on_epoch) on_epoch(r);
  };
  record(1, start.candidates[start.chosen]);
  for (std::size_t epoch = 2; epoch <= config.epochs; ++epoch) {
    Rng rng = epoch_rng(seed, epoch);
    record(epoch, train_epoch(result.learner, train, config, rng));
  }
  return result;
}

}  // namespace rcf
