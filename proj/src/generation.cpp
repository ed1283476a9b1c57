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

#include "edtk/generation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edtk/transformer.hpp"

namespace edtk {

void GenerationConfig::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("generation: top_p must lie in (0, 1]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw std::invalid_argument("generation: temperature must be > 0");
  if (max_len < 1) throw std::invalid_argument("generation: max_len must be >= 1");
}

void to_json(nlohmann::json& j, const GenerationConfig& g) {
  j = {{"top_p", g.top_p}, {"temperature", g.temperature}, {"max_len", g.max_len}, {"seed", g.seed}};
}

void from_json(const nlohmann::json& j, GenerationConfig& g) {
  g = GenerationConfig{};
  g.top_p = j.value("top_p", g.top_p);
  g.temperature = j.value("temperature", g.temperature);
  g.max_len = j.value("max_len", g.max_len);
  g.seed = j.value("seed", g.seed);
  g.validate();
}

std::string to_string(StopReason r) { return r == StopReason::eos ? "eos" : "max_len"; }

RowVector nucleus_filter(const RowVector& logits, double top_p, double temperature) {
  if (!all_finite(logits)) throw std::invalid_argument("nucleus_filter: non-finite logits");
  if (!(temperature > 0.0)) throw std::invalid_argument("nucleus_filter: temperature must be > 0");
  if (!(top_p > 0.0)) throw std::invalid_argument("nucleus_filter: top_p must be > 0");
  RowVector probs = softmax_rows(logits, 1.0 / temperature);
  if (top_p >= 1.0) return probs;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(probs.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return probs(a) > probs(b); });
  // The small slack keeps sums like 0.6 + 0.3 from missing a 0.9 threshold
  // through rounding.
  const double threshold = top_p - 1e-12;
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size() && mass < threshold) mass += probs(order[keep++]);

  RowVector out = RowVector::Zero(probs.size());
  double kept = 0.0;
  for (std::size_t i = 0; i < keep; ++i) kept += probs(order[i]);
  for (std::size_t i = 0; i < keep; ++i) out(order[i]) = probs(order[i]) / kept;
  return out;
}

PreparedMemory augment_memory(const Matrix& encoded, const SegmentedContext& context, const ActiveKnobs& knobs) {
  if (!knobs.control_code) return {encoded, context.segments};
  AugmentedContext aug = augment_context(encoded, *knobs.control_code, context.segments);
  return {std::move(aug.memory), std::move(aug.segments)};
}

PreparedMemory prepare_memory(const Model& model, const SegmentedContext& context, const ActiveKnobs& knobs) {
  return augment_memory(encode(model, context), context, knobs);
}

GenerationResult generate_from_memory(const Model& model, const PreparedMemory& memory, const ActiveKnobs& knobs,
                                      const GenerationConfig& gen, Rng& rng, const TraceOptions& trace) {
  gen.validate();
  if (gen.max_len > model.config.max_positions) {
    throw std::invalid_argument("generation: max_len exceeds the decoder's max_positions");
  }
  DecoderSession session(model, memory.memory, memory.segments, knobs);
  GenerationResult result;
  result.memory_segments = memory.segments;
  int token = Vocabulary::kBos;
  for (int t = 0; t < gen.max_len; ++t) {
    StepTrace step_trace;
    const bool record = trace.enabled && t < trace.max_steps;
    const RowVector logits = session.step(token, record ? &step_trace : nullptr);
    if (record) result.traces.push_back(std::move(step_trace));
    const RowVector probs = nucleus_filter(logits, gen.top_p, gen.temperature);
    token = static_cast<int>(sample_categorical(std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())), rng));
    result.tokens.push_back(token);
    if (token == Vocabulary::kEos) {
      result.stop_reason = StopReason::eos;
      break;
    }
  }
  result.text = model.vocab.decode(result.tokens);
  return result;
}

GenerationResult generate(const Model& model, const SegmentedContext& context, const ActiveKnobs& knobs,
                          const GenerationConfig& gen, Rng& rng, const TraceOptions& trace) {
  return generate_from_memory(model, prepare_memory(model, context, knobs), knobs, gen, rng, trace);
}

TokenLoss sequence_loss(const Model& model, const FormattedExample& example, const ActiveKnobs& knobs) {
  const auto& target = example.decoder_target;
  if (target.size() < 2) throw std::invalid_argument("perplexity: target needs at least two tokens");
  const PreparedMemory memory = prepare_memory(model, example.encoder_input, knobs);
  DecoderSession session(model, memory.memory, memory.segments, knobs);
  TokenLoss loss;
  for (std::size_t t = 0; t + 1 < target.size(); ++t) {
    const RowVector logits = session.step(target[t]);
    const double peak = logits.maxCoeff();
    const double lse = peak + std::log((logits.array() - peak).exp().sum());
    loss.nll += lse - logits(target[t + 1]);
    ++loss.tokens;
  }
  return loss;
}

double perplexity(const Model& model, std::span<const FormattedExample> examples, const ActiveKnobs& knobs) {
  if (examples.empty()) throw std::invalid_argument("perplexity: empty dataset");
  double nll = 0.0;
  long tokens = 0;
  for (const auto& ex : examples) {
    const TokenLoss l = sequence_loss(model, ex, knobs);
    nll += l.nll;
    tokens += l.tokens;
  }
  return std::exp(nll / static_cast<double>(tokens));
}

}  // namespace edtk
