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

#include "edtk/transformer.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace edtk {

ParameterBinding::ParameterBinding(Tape& tape, const Parameters& params, Parameters* grads) : tape_(tape) {
  if (!grads) return;
  for_each_pair(*grads, params, [&](const std::string&, Matrix& g, const Matrix& p) { sinks_.emplace(&p, &g); });
}

Tape::Var ParameterBinding::operator()(const Matrix& tensor) {
  if (auto it = leaves_.find(&tensor); it != leaves_.end()) return it->second;
  Matrix* sink = nullptr;
  if (auto it = sinks_.find(&tensor); it != sinks_.end()) sink = it->second;
  const Tape::Var v = tape_.parameter(tensor, sink);
  leaves_.emplace(&tensor, v);
  return v;
}

namespace {

void check_ids(std::span<const int> ids, int vocab_size) {
  for (int id : ids) {
    if (id < 0 || id >= vocab_size) throw std::invalid_argument("token id " + std::to_string(id) + " out of range");
  }
}

Tape::Var embed(Tape& tape, ParameterBinding& bind, const Matrix& token_embedding, const Matrix& positions,
                const LayerNormWeights& norm, std::span<const int> ids, double eps) {
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (n > positions.rows()) {
    throw std::invalid_argument("input of length " + std::to_string(n) + " exceeds max_positions " +
                                std::to_string(positions.rows()));
  }
  Tape::Var tokens = tape.gather_rows(bind(token_embedding), ids);
  Tape::Var pos = tape.take_rows(bind(positions), 0, n);
  return tape.layer_norm(tape.add(tokens, pos), bind(norm.gain), bind(norm.shift), eps);
}

Tape::Var attend(Tape& tape, ParameterBinding& bind, const AttentionWeights& w, Tape::Var queries, Tape::Var keys_values,
                 const Tape::AttentionSpec& spec) {
  Tape::Var q = tape.matmul(queries, bind(w.w_q));
  Tape::Var k = tape.matmul(keys_values, bind(w.w_k));
  Tape::Var v = tape.matmul(keys_values, bind(w.w_v));
  return tape.matmul(tape.attention(q, k, v, spec), bind(w.w_o));
}

Tape::Var feed_forward(Tape& tape, ParameterBinding& bind, const FeedForwardWeights& f, Tape::Var x) {
  Tape::Var h = tape.gelu(tape.add_row(tape.matmul(x, bind(f.w1)), bind(f.b1)));
  return tape.add_row(tape.matmul(h, bind(f.w2)), bind(f.b2));
}

Tape::Var norm(Tape& tape, ParameterBinding& bind, const LayerNormWeights& n, Tape::Var x, double eps) {
  return tape.layer_norm(x, bind(n.gain), bind(n.shift), eps);
}

Tape::Var drop(Tape& tape, Tape::Var x, const ForwardOptions& options) {
  if (options.dropout <= 0.0 || !options.rng) return x;
  return tape.dropout(x, options.dropout, *options.rng);
}

}  // namespace

Tape::Var encode_on_tape(Tape& tape, ParameterBinding& bind, const ModelConfig& config, const Parameters& params,
                         const SegmentedContext& context, const ForwardOptions& options) {
  context.validate();
  if (context.size() == 0) throw std::invalid_argument("encode: empty context");
  check_ids(context.token_ids, config.vocab_size);
  const double eps = config.layer_norm_eps;
  const std::vector<std::uint8_t> mask = context.key_mask();
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw std::invalid_argument("encode: context has no non-pad tokens");
  }

  Tape::Var x = drop(tape, embed(tape, bind, params.token_embedding, params.enc_position, params.enc_emb_norm,
                                 context.token_ids, eps),
                     options);
  Tape::AttentionSpec spec;
  spec.n_heads = config.n_heads;
  spec.key_mask = mask;
  for (const auto& layer : params.encoder) {
    Tape::Var a = drop(tape, attend(tape, bind, layer.self_attn, x, x, spec), options);
    x = norm(tape, bind, layer.attn_norm, tape.add(x, a), eps);
    Tape::Var f = drop(tape, feed_forward(tape, bind, layer.ffn, x), options);
    x = norm(tape, bind, layer.ffn_norm, tape.add(x, f), eps);
  }
  return x;
}

Tape::Var decode_on_tape(Tape& tape, ParameterBinding& bind, const ModelConfig& config, const Parameters& params,
                         Tape::Var memory, std::span<const std::uint8_t> memory_mask,
                         std::span<const int> decoder_input, const ForwardOptions& options) {
  check_ids(decoder_input, config.vocab_size);
  if (decoder_input.empty()) throw std::invalid_argument("decode: empty decoder input");
  const double eps = config.layer_norm_eps;
  if (tape.value(memory).cols() != config.d_model) throw DimensionError("decode: memory width mismatch");

  Tape::Var y = drop(tape, embed(tape, bind, params.token_embedding, params.dec_position, params.dec_emb_norm,
                                 decoder_input, eps),
                     options);
  Tape::AttentionSpec self_spec;
  self_spec.n_heads = config.n_heads;
  self_spec.causal = true;
  self_spec.bias = options.self_bias;

  for (int l = 0; l < config.n_dec_layers; ++l) {
    const auto& layer = params.decoder[static_cast<std::size_t>(l)];
    Tape::AttentionSpec cross_spec;
    cross_spec.n_heads = config.n_heads;
    cross_spec.key_mask = memory_mask;
    const bool biased = !options.cross_bias_layers ||
                        std::find(options.cross_bias_layers->begin(), options.cross_bias_layers->end(), l) !=
                            options.cross_bias_layers->end();
    if (biased) cross_spec.bias = options.cross_bias;

    Tape::Var s = drop(tape, attend(tape, bind, layer.self_attn, y, y, self_spec), options);
    if (config.decoder_variant == DecoderVariant::parallel) {
      if (layer.cross_attn) {
        Tape::Var c = drop(tape, attend(tape, bind, *layer.cross_attn, y, memory, cross_spec), options);
        y = norm(tape, bind, layer.self_norm, tape.add3(y, s, c), eps);
      } else {
        y = norm(tape, bind, layer.self_norm, tape.add(y, s), eps);
      }
    } else {
      y = norm(tape, bind, layer.self_norm, tape.add(y, s), eps);
      if (layer.cross_attn) {
        Tape::Var c = drop(tape, attend(tape, bind, *layer.cross_attn, y, memory, cross_spec), options);
        y = norm(tape, bind, *layer.cross_norm, tape.add(y, c), eps);
      }
    }
    Tape::Var f = drop(tape, feed_forward(tape, bind, layer.ffn, y), options);
    y = norm(tape, bind, layer.ffn_norm, tape.add(y, f), eps);
  }
  return tape.matmul_nt(y, bind(params.token_embedding));
}

Matrix encode(const ModelConfig& config, const Parameters& params, const SegmentedContext& context) {
  Tape tape(false);
  ParameterBinding bind(tape, params, nullptr);
  return tape.value(encode_on_tape(tape, bind, config, params, context, {}));
}

Matrix teacher_forced_logits(const Model& model, const SegmentedContext& context, std::span<const int> decoder_input,
                             const ForwardOptions& options) {
  Tape tape(false);
  ParameterBinding bind(tape, model.params, nullptr);
  Tape::Var memory = encode_on_tape(tape, bind, model.config, model.params, context, options);
  const std::vector<std::uint8_t> mask = context.key_mask();
  return tape.value(decode_on_tape(tape, bind, model.config, model.params, memory, mask, decoder_input, options));
}

}  // namespace edtk
