// SPDX-License-Identifier: Apache-2.0
#include "rcf/fusion.hpp"

#include <algorithm>

#include "rcf/init.hpp"

namespace rcf {

std::string_view to_string(Head head) {
  switch (head) {
    case Head::gru: return "full";
    case Head::res5: return "res5";
    case Head::fc: return "fc";
  }
  return "?";
}

std::string_view to_string(Modality modality) {
  switch (modality) {
    case Modality::rgbd: return "rgbd";
    case Modality::rgb: return "rgb";
    case Modality::depth: return "depth";
  }
  return "?";
}

Head parse_head(std::string_view text) {
  if (text == "full" || text == "gru") return Head::gru;
  if (text == "res5") return Head::res5;
  if (text == "fc") return Head::fc;
  throw ConfigError("unknown variant '" + std::string(text) + "' (expected full|res5|fc)");
}

Modality parse_modality(std::string_view text) {
  if (text == "rgbd") return Modality::rgbd;
  if (text == "rgb") return Modality::rgb;
  if (text == "depth") return Modality::depth;
  throw ConfigError("unknown modality '" + std::string(text) + "' (expected rgb|depth|rgbd)");
}

CellKind parse_cell_kind(std::string_view text) {
  if (text == "gru") return CellKind::gru;
  if (text == "lstm") return CellKind::lstm;
  throw ConfigError("unknown cell kind '" + std::string(text) + "'");
}

void FusionConfig::validate() const {
  if (projection_depth < 1) throw ConfigError("projection depth D must be positive");
  if (memory_neurons < 1) throw ConfigError("memory neurons M must be positive");
  if (num_classes < 2) throw ConfigError("need at least 2 classes");
}

// ---------------------------------------------------------------------------

ProjectionBlock ProjectionBlock::make(std::size_t in_channels, std::size_t depth, DType dtype,
                                      Rng& rng) {
  return {Conv2d::make(in_channels, depth, 7, 1, 3, false, dtype, rng),
          BatchNorm2d::make(depth, dtype), Conv2d::make(depth, depth, 1, 1, 0, false, dtype, rng),
          BatchNorm2d::make(depth, dtype)};
}

void ProjectionBlock::collect(ParamList& out, const std::string& prefix) const {
  spatial.collect(out, prefix + ".conv1");
  spatial_bn.collect(out, prefix + ".bn1");
  pointwise.collect(out, prefix + ".conv2");
  pointwise_bn.collect(out, prefix + ".bn2");
}

Tensor project(ProjectionBlock& block, const Tensor& features, Mode mode) {
  if (features.rank() != 4 || features.dim(1) != block.in_channels())
    throw ShapeError("project: block expects " + std::to_string(block.in_channels()) +
                     " channels, got input " + shape_str(features.shape()));
  Tensor a = relu(block.spatial_bn.forward(block.spatial.forward(features), mode));
  Tensor b = relu(block.pointwise_bn.forward(block.pointwise.forward(a), mode));
  return global_max_pool(b);
}

Tensor concat_modalities(const Tensor& p_rgb, const Tensor& p_depth) {
  if (p_rgb.rank() != 2 || p_rgb.shape() != p_depth.shape())
    throw ShapeError("concat_modalities: projections " + shape_str(p_rgb.shape()) + " and " +
                     shape_str(p_depth.shape()) + " must both be N x D");
  return concat(p_rgb, p_depth, 1);
}

// ---------------------------------------------------------------------------

GruCell GruCell::make(std::size_t input_size, std::size_t hidden, bool with_bias, DType dtype,
                      Rng& rng) {
  GruCell c;
  c.theta_z = xavier_init({input_size, hidden}, input_size, hidden, rng, dtype);
  c.theta_r = xavier_init({input_size, hidden}, input_size, hidden, rng, dtype);
  c.theta_h = xavier_init({input_size, hidden}, input_size, hidden, rng, dtype);
  c.gamma_z = xavier_init({hidden, hidden}, hidden, hidden, rng, dtype);
  c.gamma_r = xavier_init({hidden, hidden}, hidden, hidden, rng, dtype);
  c.gamma_h = xavier_init({hidden, hidden}, hidden, hidden, rng, dtype);
  if (with_bias) {
    c.b_z = Tensor::zeros({hidden}, dtype);
    c.b_r = Tensor::zeros({hidden}, dtype);
    c.b_h = Tensor::zeros({hidden}, dtype);
  }
  return c;
}

std::size_t GruCell::parameter_count() const {
  std::size_t n = 3 * (theta_z.numel() + gamma_z.numel());
  if (b_z) n += 3 * b_z->numel();
  return n;
}

void GruCell::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".theta_z", theta_z, ParamRole::weight});
  out.push_back({prefix + ".gamma_z", gamma_z, ParamRole::weight});
  if (b_z) out.push_back({prefix + ".b_z", *b_z, ParamRole::bias});
  out.push_back({prefix + ".theta_r", theta_r, ParamRole::weight});
  out.push_back({prefix + ".gamma_r", gamma_r, ParamRole::weight});
  if (b_r) out.push_back({prefix + ".b_r", *b_r, ParamRole::bias});
  out.push_back({prefix + ".theta_h", theta_h, ParamRole::weight});
  out.push_back({prefix + ".gamma_h", gamma_h, ParamRole::weight});
  if (b_h) out.push_back({prefix + ".b_h", *b_h, ParamRole::bias});
}

namespace {

Tensor gate_preactivation(const Tensor& p, const Tensor& theta, const Tensor& h,
                          const Tensor& gamma, const std::optional<Tensor>& bias) {
  return add(linear(p, theta, bias), linear(h, gamma));
}

}  // namespace

GruGates gru_gates(const GruCell& cell, const Tensor& p, const Tensor& h_prev) {
  if (p.rank() != 2 || p.dim(1) != cell.input_size())
    throw ShapeError("gru_step: input " + shape_str(p.shape()) + " does not match cell input " +
                     std::to_string(cell.input_size()));
  if (h_prev.rank() != 2 || h_prev.dim(0) != p.dim(0) || h_prev.dim(1) != cell.hidden_size())
    throw ShapeError("gru_step: hidden state " + shape_str(h_prev.shape()) + " must be " +
                     std::to_string(p.dim(0)) + " x " + std::to_string(cell.hidden_size()));
  Tensor z = sigmoid(gate_preactivation(p, cell.theta_z, h_prev, cell.gamma_z, cell.b_z));
  Tensor r = sigmoid(gate_preactivation(p, cell.theta_r, h_prev, cell.gamma_r, cell.b_r));
  Tensor candidate =
      rcf::tanh(gate_preactivation(p, cell.theta_h, mul(r, h_prev), cell.gamma_h, cell.b_h));
  return {z, r, candidate};
}

Tensor gru_step(const GruCell& cell, const Tensor& p, const Tensor& h_prev) {
  const GruGates g = gru_gates(cell, p, h_prev);
  // (1 − z) h_prev + z h~  ==  h_prev + z (h~ − h_prev)
  return add(h_prev, mul(g.z, sub(g.candidate, h_prev)));
}

Tensor fuse_sequence(const GruCell& cell, std::span<const Tensor> sequence,
                     const std::optional<Tensor>& h0) {
  if (sequence.empty()) throw ShapeError("fuse_sequence: empty sequence");
  for (const auto& p : sequence)
    if (p.shape() != sequence.front().shape())
      throw ShapeError("fuse_sequence: sequence elements differ in shape");
  Tensor h = h0 ? *h0
                : Tensor::zeros({sequence.front().dim(0), cell.hidden_size()},
                                sequence.front().dtype());
  for (const auto& p : sequence) h = gru_step(cell, p, h);
  return h;
}

// ---------------------------------------------------------------------------

Classifier Classifier::make(std::size_t in, std::size_t classes, bool with_bias, DType dtype,
                            Rng& rng) {
  Classifier c;
  c.theta_c = xavier_init({in, classes}, in, classes, rng, dtype);
  if (with_bias) c.bias = Tensor::zeros({classes}, dtype);
  return c;
}

std::size_t Classifier::parameter_count() const {
  return theta_c.numel() + (bias ? bias->numel() : 0);
}

void Classifier::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".theta_c", theta_c, ParamRole::weight});
  if (bias) out.push_back({prefix + ".bias", *bias, ParamRole::bias});
}

Tensor classifier_logits(const Tensor& features, const Classifier& clf) {
  return linear(features, clf.theta_c, clf.bias);
}

Tensor classify(const Tensor& features, const Classifier& clf) {
  return softmax(classifier_logits(features, clf));
}

// ---------------------------------------------------------------------------

FusionHead FusionHead::make(Head kind, std::size_t level_width, std::size_t num_levels,
                            const FusionConfig& config, DType dtype, Rng& rng) {
  FusionHead head;
  head.kind = kind;
  const std::size_t m = config.memory_neurons, k = config.num_classes;
  switch (kind) {
    case Head::gru:
      head.gru = GruCell::make(level_width, m, config.gate_bias, dtype, rng);
      head.classifier = Classifier::make(m, k, config.gate_bias, dtype, rng);
      break;
    case Head::fc:
      head.fc = Linear::make(level_width * num_levels, m, config.gate_bias, dtype, rng);
      head.classifier = Classifier::make(m, k, config.gate_bias, dtype, rng);
      break;
    case Head::res5:
      head.classifier = Classifier::make(level_width, k, config.gate_bias, dtype, rng);
      break;
  }
  return head;
}

Tensor FusionHead::logits(std::span<const Tensor> levels) const {
  if (levels.empty()) throw ShapeError("fusion head: empty level sequence");
  switch (kind) {
    case Head::gru:
      return classifier_logits(fuse_sequence(*gru, levels), classifier);
    case Head::fc:
      return classifier_logits(relu(fc->forward(concat(levels, 1))), classifier);
    case Head::res5:
      if (levels.size() != 1)
        throw ShapeError("res5 head takes only the deepest level, got " +
                         std::to_string(levels.size()));
      return classifier_logits(levels.front(), classifier);
  }
  throw ConfigError("unknown head");
}

std::size_t FusionHead::parameter_count() const {
  std::size_t n = classifier.parameter_count();
  if (gru) n += gru->parameter_count();
  if (fc) n += fc->weight.numel() + (fc->bias ? fc->bias->numel() : 0);
  return n;
}

void FusionHead::collect(ParamList& out) const {
  if (gru) gru->collect(out, "gru");
  if (fc) fc->collect(out, "fc.weight", "fc.bias");
  classifier.collect(out, "clf");
}

Tensor ablation_head(const FusionHead& head, std::span<const Tensor> levels) {
  return softmax(head.logits(levels));
}

std::size_t count_parameters(CellKind kind, std::size_t input, std::size_t hidden) {
  if (input < 1 || hidden < 1) throw ConfigError("count_parameters: sizes must be positive");
  const std::size_t per_gate = input * hidden + hidden * hidden + hidden;
  return (kind == CellKind::gru ? 3 : 4) * per_gate;
}

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  backbone.validate();
  fusion.validate();
  if (backbone.in_channels != 3) throw ConfigError("model streams take 3-channel images");
}

std::size_t ModelConfig::sequence_length() const {
  if (modality != Modality::rgbd || head == Head::res5) return 1;
  return backbone.num_levels();
}

RcFusion RcFusion::build(const ModelConfig& config, Rng& rng) {
  config.validate();
  RcFusion model;
  model.config_ = config;
  const DType dt = config.dtype;
  const bool use_rgb = config.modality != Modality::depth;
  const bool use_depth = config.modality != Modality::rgb;
  if (use_rgb) model.rgb_ = Backbone::build(config.backbone, dt, rng);
  if (use_depth) model.depth_ = Backbone::build(config.backbone, dt, rng);

  const auto taps = config.backbone.tap_shapes();
  const std::size_t d = config.fusion.projection_depth;
  for (std::size_t level = model.first_projected_level(); level < taps.size(); ++level) {
    if (use_rgb) model.rgb_proj_.push_back(ProjectionBlock::make(taps[level][0], d, dt, rng));
    if (use_depth) model.depth_proj_.push_back(ProjectionBlock::make(taps[level][0], d, dt, rng));
  }

  const std::size_t width = config.modality == Modality::rgbd ? 2 * d : d;
  const Head kind = config.modality == Modality::rgbd ? config.head : Head::res5;
  model.head_ = FusionHead::make(kind, width, config.sequence_length(), config.fusion, dt, rng);
  return model;
}

std::size_t RcFusion::first_projected_level() const {
  return config_.sequence_length() == 1 ? config_.backbone.num_levels() - 1 : 0;
}

std::vector<Tensor> RcFusion::fusion_sequence(const Tensor& rgb, const Tensor& depth, Mode mode) {
  const std::size_t first = first_projected_level();
  std::vector<Tensor> rgb_p, depth_p;
  if (rgb_) {
    auto f = rgb_->forward_multilevel(rgb, mode);
    for (std::size_t i = 0; i < rgb_proj_.size(); ++i)
      rgb_p.push_back(project(rgb_proj_[i], f[first + i], mode));
  }
  if (depth_) {
    auto f = depth_->forward_multilevel(depth, mode);
    for (std::size_t i = 0; i < depth_proj_.size(); ++i)
      depth_p.push_back(project(depth_proj_[i], f[first + i], mode));
  }
  std::vector<Tensor> sequence;
  if (rgb_ && depth_) {
    if (rgb.dim(0) != depth.dim(0))
      throw ShapeError("rgb and depth batches differ in size");
    for (std::size_t i = 0; i < rgb_p.size(); ++i)
      sequence.push_back(concat_modalities(rgb_p[i], depth_p[i]));
  } else {
    sequence = rgb_ ? rgb_p : depth_p;
  }
  if (config_.fusion.reverse_order) std::reverse(sequence.begin(), sequence.end());
  return sequence;
}

Tensor RcFusion::logits(const Tensor& rgb, const Tensor& depth, Mode mode) {
  const auto sequence = fusion_sequence(rgb, depth, mode);
  return head_.logits(sequence);
}

ParamList RcFusion::parameters() const {
  ParamList out;
  if (rgb_) {
    auto p = rgb_->parameters("rgb");
    out.insert(out.end(), p.begin(), p.end());
  }
  if (depth_) {
    auto p = depth_->parameters("depth");
    out.insert(out.end(), p.begin(), p.end());
  }
  const std::size_t first = first_projected_level();
  for (std::size_t i = 0; i < rgb_proj_.size(); ++i)
    rgb_proj_[i].collect(out, "proj.rgb.l" + std::to_string(first + i + 1));
  for (std::size_t i = 0; i < depth_proj_.size(); ++i)
    depth_proj_[i].collect(out, "proj.depth.l" + std::to_string(first + i + 1));
  head_.collect(out);
  return out;
}

Tensor rcfusion_forward(RcFusion& model, const Tensor& rgb, const Tensor& depth, Mode mode) {
  return softmax(model.logits(rgb, depth, mode));
}

}  // namespace rcf
