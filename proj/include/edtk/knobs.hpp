// Copyright 2026 The EDTK Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Inference-time control knobs: attention biasing, decoder mixing and
// context augmentation, plus the self-attention manipulations.

#ifndef EDTK_KNOBS_HPP
#define EDTK_KNOBS_HPP

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edtk/context.hpp"
#include "edtk/model.hpp"
#include "edtk/tensor.hpp"

namespace edtk {

enum class BiasKind { none, dialog, knowledge, gradual_knowledge, control_horizon, constant };

std::string to_string(BiasKind kind);
BiasKind bias_kind_from_string(const std::string& name);

/// Per-step, per-segment bias values for cross-attention.
///
/// dialog / knowledge use (knowledge_value, history_value), defaulting to
/// (1, 5) and (5, 1). gradual_knowledge ramps the knowledge value as
/// min(slope * t, cap) with history fixed at h_const. control_horizon gives
/// control-code tokens `value` and everything else 1 while t < horizon, then
/// all ones. constant maps segment kinds to fixed values (missing kinds get 1).
/// Pad positions always receive 0.
struct BiasProfile {
  BiasKind kind = BiasKind::none;
  double knowledge_value = 1.0;
  double history_value = 1.0;
  double cap = 5.0;
  double slope = 0.5;
  double h_const = 1.0;
  double value = 5.0;
  int horizon = 6;
  std::map<SegmentKind, double> constants;

  static BiasProfile none() { return {}; }
  static BiasProfile dialog(double bk = 1.0, double bh = 5.0);
  static BiasProfile knowledge(double bk = 5.0, double bh = 1.0);
  static BiasProfile gradual_knowledge(double cap = 5.0, double slope = 0.5, double h_const = 1.0);
  static BiasProfile control_horizon(double value = 5.0, int horizon = 6);
  static BiasProfile constant(std::map<SegmentKind, double> values);

  /// Throws std::invalid_argument on negative values, cap/slope <= 0 or horizon < 0.
  void validate() const;
  bool is_none() const { return kind == BiasKind::none; }

  friend bool operator==(const BiasProfile&, const BiasProfile&) = default;
};

/// Bias vector b_t: one multiplier per context position.
using BiasVector = std::vector<double>;

BiasVector build_bias_vector(const BiasProfile& profile, std::span<const Segment> segments, int t);

/// N(b ⊙ p). Throws DegenerateMassError when the product has no mass.
RowVector apply_attention_bias(const RowVector& probs, std::span<const double> bias);

enum class SelfBiasKind { none, recency_linear_decay };

struct SelfBiasProfile {
  SelfBiasKind kind = SelfBiasKind::none;
  int window = 4;

  static SelfBiasProfile none() { return {}; }
  static SelfBiasProfile recency(int window) { return {SelfBiasKind::recency_linear_decay, window}; }
  void validate() const;
  bool is_none() const { return kind == SelfBiasKind::none; }

  friend bool operator==(const SelfBiasProfile&, const SelfBiasProfile&) = default;
};

/// Self-attention multipliers over decoder positions 0..t.
BiasVector build_self_bias_vector(const SelfBiasProfile& profile, int t);

enum class MixScope { full_decoder, self_attention_only };

std::string to_string(MixScope scope);
MixScope mix_scope_from_string(const std::string& name);

/// Convex combination of decoder layers (or just their self-attention)
/// across parameter sets sharing one ModelConfig.
struct MixSpec {
  std::vector<std::shared_ptr<const Model>> decoders;
  std::vector<double> alpha;
  MixScope scope = MixScope::full_decoder;
  /// Layers where mixing applies; empty optional means all layers.
  std::optional<std::vector<int>> layers;

  /// Throws when alpha leaves the simplex or the decoders are incompatible
  /// with `config`.
  void validate(const ModelConfig& config) const;
  bool applies_to(int layer) const;
};

/// Throws on simplex violation beyond 1e-9 or a dimension mismatch.
void check_simplex(std::span<const double> alpha);
RowVector mix_layer_outputs(std::span<const RowVector> outputs, std::span<const double> alpha);

/// Averaged encoder representation of control phrases.
struct ControlCode {
  Matrix matrix;
  int source_count = 0;

  Eigen::Index length() const { return matrix.rows(); }
};

inline constexpr int kDefaultControlLength = 16;

using EncodeFn = std::function<Matrix(const SegmentedContext&)>;

/// Pads or truncates every phrase to `length`, encodes each one on its own
/// and averages the encodings position-wise. Pad slots are masked during
/// encoding, so their rows carry whatever the encoder emits for masked queries.
ControlCode build_control_code(const EncodeFn& encoder, std::span<const std::vector<int>> phrases, int length,
                               int pad_id);

struct AugmentedContext {
  Matrix memory;
  std::vector<Segment> segments;
};

/// Prepends the control code rows to `memory` and labels them control_code.
AugmentedContext augment_context(const Matrix& memory, const ControlCode& code, std::span<const Segment> segments);

enum class ProjectionSelector { w_q, w_k, w_v };

struct FrobeniusReport {
  double avg_diff_norm = 0.0;
  double avg_norm = 0.0;
};

/// Mean ||A - B||_F and mean ||A||_F over decoder self-attention projections.
FrobeniusReport frobenius_diff(const Parameters& a, const Parameters& b, ProjectionSelector selector);

/// Copies decoder self-attention projections of `donor` into `target`.
void swap_decoder_self_attention(Parameters& target, const Parameters& donor);

/// Runtime knob set consumed by the decoder.
struct ActiveKnobs {
  BiasProfile bias;
  /// Decoder layers receiving cross-attention bias; empty optional means all.
  std::optional<std::vector<int>> bias_layers;
  SelfBiasProfile self_bias;
  std::optional<MixSpec> mix;
  std::optional<ControlCode> control_code;

  bool biases_layer(int layer) const;
  void validate(const ModelConfig& config) const;
};

}  // namespace edtk

#endif  // EDTK_KNOBS_HPP
