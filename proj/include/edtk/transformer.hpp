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

// Full-sequence encoder and teacher-forced decoder built on the tape. The
// encoder here is also the inference encoder; the incremental decoder used
// for generation lives in decoder.hpp and is cross-checked against this one.

#ifndef EDTK_TRANSFORMER_HPP
#define EDTK_TRANSFORMER_HPP

#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "edtk/autograd.hpp"
#include "edtk/context.hpp"
#include "edtk/model.hpp"

namespace edtk {

struct ForwardOptions {
  double dropout = 0.0;
  Rng* rng = nullptr;
  /// Decoder positions x memory rows; multiplies cross-attention rows.
  const Matrix* cross_bias = nullptr;
  /// Layers receiving `cross_bias`; empty optional means every layer.
  std::optional<std::vector<int>> cross_bias_layers;
  /// Decoder positions x decoder positions; multiplies self-attention rows.
  const Matrix* self_bias = nullptr;
};

/// Maps parameter tensors to tape leaves, routing gradients into `grads`.
class ParameterBinding {
 public:
  ParameterBinding(Tape& tape, const Parameters& params, Parameters* grads);
  Tape::Var operator()(const Matrix& tensor);

 private:
  Tape& tape_;
  std::unordered_map<const Matrix*, Matrix*> sinks_;
  std::unordered_map<const Matrix*, Tape::Var> leaves_;
};

Tape::Var encode_on_tape(Tape& tape, ParameterBinding& bind, const ModelConfig& config, const Parameters& params,
                         const SegmentedContext& context, const ForwardOptions& options);

/// Returns decoder_input.size() x vocab logits.
Tape::Var decode_on_tape(Tape& tape, ParameterBinding& bind, const ModelConfig& config, const Parameters& params,
                         Tape::Var memory, std::span<const std::uint8_t> memory_mask,
                         std::span<const int> decoder_input, const ForwardOptions& options);

/// Encoder output (context length x d_model). Throws on overlong input or
/// out-of-range ids.
Matrix encode(const ModelConfig& config, const Parameters& params, const SegmentedContext& context);
inline Matrix encode(const Model& model, const SegmentedContext& context) {
  return encode(model.config, model.params, context);
}

Matrix teacher_forced_logits(const Model& model, const SegmentedContext& context, std::span<const int> decoder_input,
                             const ForwardOptions& options = {});

}  // namespace edtk

#endif  // EDTK_TRANSFORMER_HPP
