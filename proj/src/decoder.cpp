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

#include "edtk/decoder.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace edtk {

namespace {

RowVector project_row(const RowVector& x, const Matrix& w) {
  RowVector out;
  out.noalias() = x * w;
  return out;
}

RowVector gelu_row(RowVector x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x(i);
    x(i) = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  }
  return x;
}

RowVector feed_forward_row(const FeedForwardWeights& f, const RowVector& x) {
  RowVector h = project_row(x, f.w1) + f.b1;
  return project_row(gelu_row(std::move(h)), f.w2) + f.b2;
}

RowVector norm_row(const LayerNormWeights& n, const RowVector& x, double eps) {
  return layer_norm(x, n.gain, n.shift, eps);
}

// Attention for one query over the first `count` cached keys. Returns the
// concatenated heads before the output projection.
RowVector attend_row(const RowVector& q, const Matrix& keys, const Matrix& values, Eigen::Index count, int n_heads,
                     std::span<const std::uint8_t> mask, std::span<const double> bias, AttentionTrace* trace) {
  const Eigen::Index d = q.size();
  const Eigen::Index dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (!bias.empty() && static_cast<Eigen::Index>(bias.size()) != count) {
    throw DimensionError("attention: bias length " + std::to_string(bias.size()) + " for " + std::to_string(count) +
                         " keys");
  }
  if (trace) {
    trace->pre_bias = Matrix::Zero(n_heads, count);
    trace->post_bias = Matrix::Zero(n_heads, count);
  }
  RowVector out = RowVector::Zero(d);
  std::vector<double> scores(static_cast<std::size_t>(count));
  std::vector<double> w(static_cast<std::size_t>(count));
  for (int h = 0; h < n_heads; ++h) {
    const auto qh = q.segment(h * dh, dh);
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < count; ++j) {
      if (!mask.empty() && !mask[static_cast<std::size_t>(j)]) continue;
      scores[static_cast<std::size_t>(j)] = qh.dot(keys.row(j).segment(h * dh, dh));
      peak = std::max(peak, scores[static_cast<std::size_t>(j)]);
    }
    if (!std::isfinite(peak)) throw DegenerateMassError("attention row has no valid keys");
    double total = 0.0;
    double raw_total = 0.0;
    for (Eigen::Index j = 0; j < count; ++j) {
      const auto js = static_cast<std::size_t>(j);
      if (!mask.empty() && !mask[js]) {
        w[js] = 0.0;
        continue;
      }
      double e = std::exp(scale * (scores[js] - peak));
      if (trace) {
        trace->pre_bias(h, j) = e;
        raw_total += e;
      }
      if (!bias.empty()) e *= bias[js];
      w[js] = e;
      total += e;
    }
    if (!(total > 0.0)) throw DegenerateMassError();
    auto oh = out.segment(h * dh, dh);
    for (Eigen::Index j = 0; j < count; ++j) {
      const auto js = static_cast<std::size_t>(j);
      if (w[js] == 0.0) continue;
      const double p = w[js] / total;
      oh.noalias() += p * values.row(j).segment(h * dh, dh);
      if (trace) trace->post_bias(h, j) = p;
    }
    if (trace) trace->pre_bias.row(h) /= raw_total;
  }
  return out;
}

void check_memory(const Matrix& memory, const std::vector<Segment>& segments, const ModelConfig& config) {
  if (memory.cols() != config.d_model) {
    throw DimensionError("decoder: memory width " + std::to_string(memory.cols()) + " but d_model is " +
                         std::to_string(config.d_model));
  }
  if (static_cast<std::size_t>(memory.rows()) != segments.size()) {
    throw DimensionError("decoder: memory rows and segment labels differ");
  }
  if (memory.rows() == 0) throw DimensionError("decoder: empty memory");
}

}  // namespace

MultiHeadResult multi_head_attention(const AttentionWeights& weights, int n_heads, const Matrix& queries,
                                     const Matrix& keys_values, bool causal,
                                     std::optional<std::span<const double>> bias,
                                     std::span<const std::uint8_t> key_mask) {
  const Eigen::Index d = weights.w_q.rows();
  if (queries.cols() != d || keys_values.cols() != d) throw DimensionError("multi_head_attention: width mismatch");
  if (n_heads < 1 || weights.w_q.cols() % n_heads != 0) throw DimensionError("multi_head_attention: bad head count");
  if (causal && queries.rows() > keys_values.rows()) throw DimensionError("multi_head_attention: causal needs keys >= queries");
  if (bias && static_cast<Eigen::Index>(bias->size()) != keys_values.rows()) {
    throw DimensionError("multi_head_attention: bias length must equal key count");
  }
  if (!key_mask.empty() && static_cast<Eigen::Index>(key_mask.size()) != keys_values.rows()) {
    throw DimensionError("multi_head_attention: key mask length mismatch");
  }
  const Eigen::Index nk = keys_values.rows();
  Matrix k(nk, weights.w_k.cols());
  Matrix v(nk, weights.w_v.cols());
  for (Eigen::Index j = 0; j < nk; ++j) {
    k.row(j) = project_row(keys_values.row(j), weights.w_k);
    v.row(j) = project_row(keys_values.row(j), weights.w_v);
  }
  MultiHeadResult result;
  result.output.resize(queries.rows(), weights.w_o.cols());
  result.rows.resize(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const Eigen::Index count = causal ? i + 1 : nk;
    std::span<const double> b;
    if (bias) b = bias->subspan(0, static_cast<std::size_t>(count));
    std::span<const std::uint8_t> m = key_mask.empty() ? key_mask : key_mask.subspan(0, static_cast<std::size_t>(count));
    const RowVector q = project_row(queries.row(i), weights.w_q);
    const RowVector heads = attend_row(q, k, v, count, n_heads, m, b, &result.rows[static_cast<std::size_t>(i)]);
    result.output.row(i) = project_row(heads, weights.w_o);
  }
  return result;
}

DecoderSession::DecoderSession(const Model& model, Matrix memory, std::vector<Segment> segments, ActiveKnobs knobs)
    : model_(model), memory_(std::move(memory)), segments_(std::move(segments)), knobs_(std::move(knobs)) {
  const ModelConfig& config = model_.config;
  check_memory(memory_, segments_, config);
  knobs_.validate(config);
  memory_mask_.resize(segments_.size());
  for (std::size_t i = 0; i < segments_.size(); ++i) memory_mask_[i] = segments_[i].is_pad() ? 0 : 1;

  std::vector<const Model*> models{&model_};
  if (knobs_.mix) {
    for (const auto& d : knobs_.mix->decoders) models.push_back(d.get());
  }
  for (const Model* m : models) {
    DecoderState state;
    state.model = m;
    state.layers.resize(static_cast<std::size_t>(config.n_dec_layers));
    for (int l = 0; l < config.n_dec_layers; ++l) {
      const auto& w = m->params.decoder[static_cast<std::size_t>(l)];
      LayerCache& c = state.layers[static_cast<std::size_t>(l)];
      c.self_k.resize(config.max_positions, config.d_model);
      c.self_v.resize(config.max_positions, config.d_model);
      if (w.cross_attn) {
        c.cross_k.resize(memory_.rows(), config.d_model);
        c.cross_v.resize(memory_.rows(), config.d_model);
        for (Eigen::Index j = 0; j < memory_.rows(); ++j) {
          c.cross_k.row(j) = project_row(memory_.row(j), w.cross_attn->w_k);
          c.cross_v.row(j) = project_row(memory_.row(j), w.cross_attn->w_v);
        }
      }
    }
    states_.push_back(std::move(state));
  }
}

RowVector DecoderSession::embed(int token, int t) const {
  const ModelConfig& config = model_.config;
  if (token < 0 || token >= config.vocab_size) throw std::invalid_argument("decoder: token id out of range");
  if (t >= config.max_positions) {
    throw std::invalid_argument("decoder: position " + std::to_string(t) + " exceeds max_positions");
  }
  const RowVector x = model_.params.token_embedding.row(token) + model_.params.dec_position.row(t);
  return norm_row(model_.params.dec_emb_norm, x, config.layer_norm_eps);
}

RowVector DecoderSession::self_attention(DecoderState& d, int l, const RowVector& x, int t, AttentionTrace* trace) {
  const auto& w = d.model->params.decoder[static_cast<std::size_t>(l)].self_attn;
  LayerCache& c = d.layers[static_cast<std::size_t>(l)];
  c.self_k.row(t) = project_row(x, w.w_k);
  c.self_v.row(t) = project_row(x, w.w_v);
  BiasVector bias;
  if (!knobs_.self_bias.is_none()) bias = build_self_bias_vector(knobs_.self_bias, t);
  const RowVector q = project_row(x, w.w_q);
  return project_row(attend_row(q, c.self_k, c.self_v, t + 1, model_.config.n_heads, {}, bias, trace), w.w_o);
}

RowVector DecoderSession::finish_layer(DecoderState& d, int l, const RowVector& x, const RowVector& sa, int t,
                                       AttentionTrace* cross_trace) {
  const ModelConfig& config = model_.config;
  const double eps = config.layer_norm_eps;
  const auto& w = d.model->params.decoder[static_cast<std::size_t>(l)];
  const LayerCache& c = d.layers[static_cast<std::size_t>(l)];

  auto cross = [&](const RowVector& input) {
    BiasVector bias;
    if (!knobs_.bias.is_none() && knobs_.biases_layer(l)) bias = build_bias_vector(knobs_.bias, segments_, t);
    const RowVector q = project_row(input, w.cross_attn->w_q);
    return RowVector(project_row(
        attend_row(q, c.cross_k, c.cross_v, memory_.rows(), config.n_heads, memory_mask_, bias, cross_trace),
        w.cross_attn->w_o));
  };

  RowVector y;
  if (config.decoder_variant == DecoderVariant::parallel) {
    if (w.cross_attn) {
      const RowVector ca = cross(x);
      y = norm_row(w.self_norm, x + sa + ca, eps);
    } else {
      y = norm_row(w.self_norm, x + sa, eps);
    }
  } else {
    y = norm_row(w.self_norm, x + sa, eps);
    if (w.cross_attn) {
      const RowVector ca = cross(y);
      y = norm_row(*w.cross_norm, y + ca, eps);
    }
  }
  const RowVector f = feed_forward_row(w.ffn, y);
  return norm_row(w.ffn_norm, y + f, eps);
}

RowVector DecoderSession::layer(int l, const RowVector& x, int t, LayerTrace* trace) {
  AttentionTrace* self_trace = trace ? &trace->self : nullptr;
  AttentionTrace cross_trace;
  AttentionTrace* cross_ptr = trace ? &cross_trace : nullptr;
  RowVector y;

  if (!knobs_.mix || !knobs_.mix->applies_to(l)) {
    DecoderState& d = states_[0];
    y = finish_layer(d, l, x, self_attention(d, l, x, t, self_trace), t, cross_ptr);
  } else {
    const MixSpec& mix = *knobs_.mix;
    std::vector<RowVector> parts;
    parts.reserve(mix.decoders.size());
    for (std::size_t i = 0; i < mix.decoders.size(); ++i) {
      DecoderState& d = states_[i + 1];
      AttentionTrace* st = i == 0 ? self_trace : nullptr;
      if (mix.scope == MixScope::full_decoder) {
        parts.push_back(finish_layer(d, l, x, self_attention(d, l, x, t, st), t, i == 0 ? cross_ptr : nullptr));
      } else {
        parts.push_back(self_attention(d, l, x, t, st));
      }
    }
    y = mix_layer_outputs(parts, mix.alpha);
    if (mix.scope == MixScope::self_attention_only) y = finish_layer(states_[0], l, x, y, t, cross_ptr);
  }

  if (trace && model_.params.decoder[static_cast<std::size_t>(l)].cross_attn) trace->cross = std::move(cross_trace);
  return y;
}

RowVector DecoderSession::project(const RowVector& y) const {
  RowVector logits;
  logits.noalias() = y * model_.params.token_embedding.transpose();
  return logits;
}

RowVector DecoderSession::step(int token, StepTrace* trace) {
  const int t = position_;
  RowVector x = embed(token, t);
  if (trace) trace->layers.assign(static_cast<std::size_t>(model_.config.n_dec_layers), LayerTrace{});
  for (int l = 0; l < model_.config.n_dec_layers; ++l) {
    x = layer(l, x, t, trace ? &trace->layers[static_cast<std::size_t>(l)] : nullptr);
  }
  ++position_;
  return project(x);
}

Matrix decode_full(const Model& model, const Matrix& memory, const std::vector<Segment>& segments,
                   const ActiveKnobs& knobs, std::span<const int> tokens) {
  if (tokens.empty()) throw std::invalid_argument("decode_full: empty decoder input");
  DecoderSession session(model, memory, segments, knobs);
  const auto n = static_cast<int>(tokens.size());
  std::vector<RowVector> rows;
  rows.reserve(tokens.size());
  for (int t = 0; t < n; ++t) rows.push_back(session.embed(tokens[static_cast<std::size_t>(t)], t));
  for (int l = 0; l < model.config.n_dec_layers; ++l) {
    for (int t = 0; t < n; ++t) rows[static_cast<std::size_t>(t)] = session.layer(l, rows[static_cast<std::size_t>(t)], t, nullptr);
  }
  Matrix logits(n, model.config.vocab_size);
  for (int t = 0; t < n; ++t) logits.row(t) = session.project(rows[static_cast<std::size_t>(t)]);
  return logits;
}

}  // namespace edtk
