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

// Incremental decoder with per-layer key/value caches. Knobs attach here:
// per-step cross and self bias vectors, decoder mixing and traces.

#ifndef EDTK_DECODER_HPP
#define EDTK_DECODER_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "edtk/context.hpp"
#include "edtk/knobs.hpp"
#include "edtk/model.hpp"

namespace edtk {

/// heads x keys attention rows for one query position.
struct AttentionTrace {
  Matrix pre_bias;
  Matrix post_bias;
};

struct LayerTrace {
  AttentionTrace self;
  std::optional<AttentionTrace> cross;
};

struct StepTrace {
  std::vector<LayerTrace> layers;
};

struct MultiHeadResult {
  Matrix output;
  /// One trace per query row.
  std::vector<AttentionTrace> rows;
};

/// Standalone attention over `keys_values` for every query row. The optional
/// bias (one entry per key) is shared across heads and query rows.
MultiHeadResult multi_head_attention(const AttentionWeights& weights, int n_heads, const Matrix& queries,
                                     const Matrix& keys_values, bool causal,
                                     std::optional<std::span<const double>> bias = std::nullopt,
                                     std::span<const std::uint8_t> key_mask = {});

class DecoderSession {
 public:
  /// `memory` comes from the model's encoder, possibly augmented; `segments`
  /// labels its rows. Knobs are validated against the model config.
  DecoderSession(const Model& model, Matrix memory, std::vector<Segment> segments, ActiveKnobs knobs);

  /// Consumes `token` at the next position and returns next-token logits.
  RowVector step(int token, StepTrace* trace = nullptr);
  int position() const { return position_; }
  const std::vector<Segment>& segments() const { return segments_; }

 private:
  struct LayerCache {
    Matrix self_k;
    Matrix self_v;
    Matrix cross_k;
    Matrix cross_v;
  };
  struct DecoderState {
    const Model* model = nullptr;
    std::vector<LayerCache> layers;
  };

  friend Matrix decode_full(const Model&, const Matrix&, const std::vector<Segment>&, const ActiveKnobs&,
                            std::span<const int>);

  RowVector embed(int token, int t) const;
  RowVector layer(int l, const RowVector& x, int t, LayerTrace* trace);
  RowVector self_attention(DecoderState& d, int l, const RowVector& x, int t, AttentionTrace* trace);
  RowVector finish_layer(DecoderState& d, int l, const RowVector& x, const RowVector& sa, int t,
                         AttentionTrace* cross_trace);
  RowVector project(const RowVector& y) const;

  const Model& model_;
  Matrix memory_;
  std::vector<Segment> segments_;
  std::vector<std::uint8_t> memory_mask_;
  ActiveKnobs knobs_;
  /// Index 0 is the generating model; mixing decoders follow.
  std::vector<DecoderState> states_;
  std::vector<BiasVector> cross_bias_;
  std::vector<BiasVector> self_bias_;
  int position_ = 0;
};

/// Layer-major recomputation over a whole decoder input without reusing
/// state across positions. Returns tokens x vocab logits.
Matrix decode_full(const Model& model, const Matrix& memory, const std::vector<Segment>& segments,
                   const ActiveKnobs& knobs, std::span<const int> tokens);

}  // namespace edtk

#endif  // EDTK_DECODER_HPP
