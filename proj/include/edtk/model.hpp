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

#ifndef EDTK_MODEL_HPP
#define EDTK_MODEL_HPP

#include "json.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "edtk/rng.hpp"
#include "edtk/tensor.hpp"
#include "edtk/vocab.hpp"

namespace edtk {

enum class DecoderVariant { sequential, parallel };

std::string to_string(DecoderVariant v);
DecoderVariant decoder_variant_from_string(const std::string& name);

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int d_ff = 128;
  int max_positions = 64;
  DecoderVariant decoder_variant = DecoderVariant::sequential;
  /// Decoder layers that own a cross-attention block. Sorted, unique.
  std::vector<int> cross_attn_layers;
  double layer_norm_eps = 1e-5;

  int head_dim() const { return d_model / n_heads; }
  bool has_cross_attention(int layer) const;
  /// Throws std::invalid_argument naming the violated invariant.
  void validate() const;

  /// d_model=64, 2+2 layers, 4 heads, d_ff=128, cross-attention everywhere.
  static ModelConfig desk_scale(int vocab_size);
  static std::vector<int> all_layers(int n);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct AttentionWeights {
  Matrix w_q, w_k, w_v, w_o;
};

/// Gain and shift stored as 1 x d matrices.
struct LayerNormWeights {
  Matrix gain, shift;
};

struct FeedForwardWeights {
  Matrix w1, b1, w2, b2;
};

struct EncoderLayerWeights {
  AttentionWeights self_attn;
  LayerNormWeights attn_norm;
  FeedForwardWeights ffn;
  LayerNormWeights ffn_norm;
};

/// In the parallel variant `self_norm` normalizes the merged attention
/// residual and `cross_norm` is absent.
struct DecoderLayerWeights {
  AttentionWeights self_attn;
  LayerNormWeights self_norm;
  std::optional<AttentionWeights> cross_attn;
  std::optional<LayerNormWeights> cross_norm;
  FeedForwardWeights ffn;
  LayerNormWeights ffn_norm;
};

/// Every learned tensor of the encoder-decoder. The output projection is tied
/// to `token_embedding`.
struct Parameters {
  Matrix token_embedding;
  Matrix enc_position;
  Matrix dec_position;
  LayerNormWeights enc_emb_norm;
  LayerNormWeights dec_emb_norm;
  std::vector<EncoderLayerWeights> encoder;
  std::vector<DecoderLayerWeights> decoder;

  /// Visits (name, tensor) in canonical order.
  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;

  std::vector<std::string> names() const;
  std::size_t scalar_count() const;
  /// Same structure, all entries zero.
  Parameters zeros_like() const;
  bool all_finite() const;
};

/// Visits matching tensors of two structurally identical parameter sets.
void for_each_pair(const Parameters& a, const Parameters& b,
                   const std::function<void(const std::string&, const Matrix&, const Matrix&)>& fn);
void for_each_pair(Parameters& a, const Parameters& b,
                   const std::function<void(const std::string&, Matrix&, const Matrix&)>& fn);

struct Model {
  ModelConfig config;
  Parameters params;
  Vocabulary vocab;
};

inline constexpr double kInitStd = 0.02;

/// Scaled-normal weights (std 0.02), zero biases, identity norms.
Parameters init_parameters(const ModelConfig& config, Rng& rng);

/// Fresh random values for every decoder self-attention projection.
void randomize_decoder_self_attention(Parameters& params, Rng& rng);

/// Copy of `model` keeping cross-attention only in `layers`. Every kept layer
/// must already own cross-attention; the others lose it (and its norm).
Model restrict_cross_attention(const Model& model, std::vector<int> layers);

/// Throws std::invalid_argument when tensor shapes disagree with `config`.
void check_shapes(const Parameters& params, const ModelConfig& config);

}  // namespace edtk

#endif  // EDTK_MODEL_HPP
