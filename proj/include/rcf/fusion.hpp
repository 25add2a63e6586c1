// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rcf/backbone.hpp"
#include "rcf/layers.hpp"

namespace rcf {

/// How the per-level RGB-D vectors are combined.
enum class Head {
  gru,   // recurrent fusion over all levels
  res5,  // deepest level only, no recurrence
  fc,    // one affine + relu layer over all levels concatenated
};

enum class Modality { rgbd, rgb, depth };

std::string_view to_string(Head head);
std::string_view to_string(Modality modality);
Head parse_head(std::string_view text);  // "full" is accepted for gru
Modality parse_modality(std::string_view text);

struct FusionConfig {
  std::size_t projection_depth = 64;  // D
  std::size_t memory_neurons = 32;    // M
  std::size_t num_classes = 16;       // K
  bool gate_bias = true;              // biases on gates, fc layer and classifier
  bool reverse_order = false;         // feed levels deep -> shallow

  void validate() const;
  bool operator==(const FusionConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Projection into the common D-dimensional space

/// 7x7 conv (stride 1, pad 3) -> BN -> relu -> 1x1 conv -> BN -> relu ->
/// global max pool. Maps N x C x H x W to N x D for any H, W.
struct ProjectionBlock {
  Conv2d spatial;
  BatchNorm2d spatial_bn;
  Conv2d pointwise;
  BatchNorm2d pointwise_bn;

  static ProjectionBlock make(std::size_t in_channels, std::size_t depth, DType dtype, Rng& rng);
  std::size_t in_channels() const { return spatial.in_channels(); }
  std::size_t depth() const { return spatial.out_channels(); }
  void collect(ParamList& out, const std::string& prefix) const;
};

Tensor project(ProjectionBlock& block, const Tensor& features, Mode mode);

/// [p_rgb ; p_depth] along features: N x D, N x D -> N x 2D.
Tensor concat_modalities(const Tensor& p_rgb, const Tensor& p_depth);

// ---------------------------------------------------------------------------
// Recurrent fusion

/**
 * Gated recurrent unit. Input-to-hidden matrices theta_* are (input x M),
 * hidden-to-hidden matrices gamma_* are (M x M):
 *
 *   z  = sigmoid(p theta_z + h_prev gamma_z + b_z)
 *   r  = sigmoid(p theta_r + h_prev gamma_r + b_r)
 *   h~ = tanh(p theta_h + (r * h_prev) gamma_h + b_h)
 *   h  = (1 − z) * h_prev + z * h~
 */
struct GruCell {
  Tensor theta_z, theta_r, theta_h;
  Tensor gamma_z, gamma_r, gamma_h;
  std::optional<Tensor> b_z, b_r, b_h;

  static GruCell make(std::size_t input_size, std::size_t hidden, bool with_bias, DType dtype,
                      Rng& rng);
  std::size_t input_size() const { return theta_z.dim(0); }
  std::size_t hidden_size() const { return theta_z.dim(1); }
  std::size_t parameter_count() const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct GruGates {
  Tensor z;          // update gate
  Tensor r;          // reset gate
  Tensor candidate;  // h~
};

GruGates gru_gates(const GruCell& cell, const Tensor& p, const Tensor& h_prev);
Tensor gru_step(const GruCell& cell, const Tensor& p, const Tensor& h_prev);

/// Runs gru_step over the sequence in order and returns the last state.
/// h0 defaults to zeros.
Tensor fuse_sequence(const GruCell& cell, std::span<const Tensor> sequence,
                     const std::optional<Tensor>& h0 = std::nullopt);

// ---------------------------------------------------------------------------
// Classification

struct Classifier {
  Tensor theta_c;  // M x K
  std::optional<Tensor> bias;

  static Classifier make(std::size_t in, std::size_t classes, bool with_bias, DType dtype,
                         Rng& rng);
  std::size_t parameter_count() const;
  void collect(ParamList& out, const std::string& prefix) const;
};

Tensor classifier_logits(const Tensor& features, const Classifier& clf);
/// softmax(features theta_c + bias), N x K.
Tensor classify(const Tensor& features, const Classifier& clf);

// ---------------------------------------------------------------------------
// Heads

/// The part of the model after the per-level concatenation.
struct FusionHead {
  Head kind = Head::gru;
  std::optional<GruCell> gru;
  std::optional<Linear> fc;
  Classifier classifier;

  /// `levels` is the fusion sequence: L vectors for gru / fc, the deepest
  /// vector alone for res5.
  static FusionHead make(Head kind, std::size_t level_width, std::size_t num_levels,
                         const FusionConfig& config, DType dtype, Rng& rng);
  Tensor logits(std::span<const Tensor> levels) const;
  std::size_t parameter_count() const;
  void collect(ParamList& out) const;
};

/// Probabilities of a head given its fusion sequence.
Tensor ablation_head(const FusionHead& head, std::span<const Tensor> levels);

enum class CellKind { gru, lstm };
CellKind parse_cell_kind(std::string_view text);

/// Weights of a single recurrent layer with biases: 3(nm + m² + m) for a
/// GRU, 4(nm + m² + m) for an LSTM.
std::size_t count_parameters(CellKind kind, std::size_t input, std::size_t hidden);

// ---------------------------------------------------------------------------
// Full model

struct ModelConfig {
  BackboneConfig backbone;
  FusionConfig fusion;
  Head head = Head::gru;
  Modality modality = Modality::rgbd;
  DType dtype = DType::f32;

  void validate() const;
  /// Levels that feed the head: L for gru / fc, 1 for res5 and single modality.
  std::size_t sequence_length() const;
  bool operator==(const ModelConfig&) const = default;
};

/**
 * Two-stream multi-level fusion classifier.
 *
 * rgbd: both backbones -> per-(modality, level) projection -> concat ->
 * head -> classifier. rgb / depth: one backbone, a projection of its
 * deepest tap and a softmax classifier on that D-vector.
 */
class RcFusion {
 public:
  static RcFusion build(const ModelConfig& config, Rng& rng);

  /// Unnormalized class scores, N x K.
  Tensor logits(const Tensor& rgb, const Tensor& depth, Mode mode);

  /// The fusion sequence fed to the head (after any order reversal).
  std::vector<Tensor> fusion_sequence(const Tensor& rgb, const Tensor& depth, Mode mode);

  ParamList parameters() const;
  std::size_t head_parameter_count() const { return head_.parameter_count(); }
  const ModelConfig& config() const { return config_; }

  std::optional<Backbone>& rgb_backbone() { return rgb_; }
  std::optional<Backbone>& depth_backbone() { return depth_; }
  std::vector<ProjectionBlock>& rgb_projections() { return rgb_proj_; }
  std::vector<ProjectionBlock>& depth_projections() { return depth_proj_; }
  FusionHead& head() { return head_; }

 private:
  /// First backbone level that has a projection block.
  std::size_t first_projected_level() const;

  ModelConfig config_;
  std::optional<Backbone> rgb_;
  std::optional<Backbone> depth_;
  std::vector<ProjectionBlock> rgb_proj_;
  std::vector<ProjectionBlock> depth_proj_;
  FusionHead head_;
};

/// softmax of RcFusion::logits.
Tensor rcfusion_forward(RcFusion& model, const Tensor& rgb, const Tensor& depth, Mode mode);

}  // namespace rcf
