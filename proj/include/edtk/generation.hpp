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

// Autoregressive generation with knobs, nucleus sampling and perplexity.

#ifndef EDTK_GENERATION_HPP
#define EDTK_GENERATION_HPP

#include <span>
#include <string>
#include <vector>

#include "edtk/corpus.hpp"
#include "edtk/decoder.hpp"
#include "edtk/knobs.hpp"
#include "edtk/rng.hpp"

namespace edtk {

struct GenerationConfig {
  double top_p = 0.9;
  double temperature = 0.7;
  int max_len = 40;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

void to_json(nlohmann::json& j, const GenerationConfig& g);
void from_json(const nlohmann::json& j, GenerationConfig& g);

enum class StopReason { eos, max_len };
std::string to_string(StopReason r);

struct GenerationResult {
  /// Generated ids after <s>; ends with </s> iff stop_reason is eos.
  std::vector<int> tokens;
  std::string text;
  StopReason stop_reason = StopReason::max_len;
  /// One entry per generated token up to the trace cap, when requested.
  std::vector<StepTrace> traces;
  /// Labels of the memory rows the cross-attention traces refer to.
  std::vector<Segment> memory_segments;
};

/// Tempered softmax restricted to the smallest descending prefix whose mass
/// reaches top_p (ties broken toward the lower id), renormalized. With
/// top_p >= 1 the tempered softmax is returned unchanged.
RowVector nucleus_filter(const RowVector& logits, double top_p, double temperature);

struct PreparedMemory {
  Matrix memory;
  std::vector<Segment> segments;
};

/// Encoder output for `context`, with the control code prepended when the
/// knobs carry one.
PreparedMemory prepare_memory(const Model& model, const SegmentedContext& context, const ActiveKnobs& knobs);
PreparedMemory augment_memory(const Matrix& encoded, const SegmentedContext& context, const ActiveKnobs& knobs);

struct TraceOptions {
  bool enabled = false;
  int max_steps = 40;
};

GenerationResult generate_from_memory(const Model& model, const PreparedMemory& memory, const ActiveKnobs& knobs,
                                      const GenerationConfig& gen, Rng& rng, const TraceOptions& trace = {});
GenerationResult generate(const Model& model, const SegmentedContext& context, const ActiveKnobs& knobs,
                          const GenerationConfig& gen, Rng& rng, const TraceOptions& trace = {});

struct TokenLoss {
  double nll = 0.0;
  long tokens = 0;
};

/// Teacher-forced negative log-likelihood of `example.decoder_target` through
/// the incremental decoder with knobs applied.
TokenLoss sequence_loss(const Model& model, const FormattedExample& example, const ActiveKnobs& knobs = {});

/// exp of the mean token cross-entropy over all target positions.
double perplexity(const Model& model, std::span<const FormattedExample> examples, const ActiveKnobs& knobs = {});

}  // namespace edtk

#endif  // EDTK_GENERATION_HPP
