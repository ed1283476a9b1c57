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

#include "edtk/knobs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace edtk {

std::string to_string(BiasKind kind) {
  switch (kind) {
    case BiasKind::none: return "none";
    case BiasKind::dialog: return "dialog";
    case BiasKind::knowledge: return "knowledge";
    case BiasKind::gradual_knowledge: return "gradual_knowledge";
    case BiasKind::control_horizon: return "control_horizon";
    case BiasKind::constant: return "constant";
  }
  return "none";
}

BiasKind bias_kind_from_string(const std::string& name) {
  for (BiasKind k : {BiasKind::none, BiasKind::dialog, BiasKind::knowledge, BiasKind::gradual_knowledge,
                     BiasKind::control_horizon, BiasKind::constant}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown bias profile '" + name + "'");
}

BiasProfile BiasProfile::dialog(double bk, double bh) {
  BiasProfile p;
  p.kind = BiasKind::dialog;
  p.knowledge_value = bk;
  p.history_value = bh;
  return p;
}

BiasProfile BiasProfile::knowledge(double bk, double bh) {
  BiasProfile p;
  p.kind = BiasKind::knowledge;
  p.knowledge_value = bk;
  p.history_value = bh;
  return p;
}

BiasProfile BiasProfile::gradual_knowledge(double cap, double slope, double h_const) {
  BiasProfile p;
  p.kind = BiasKind::gradual_knowledge;
  p.cap = cap;
  p.slope = slope;
  p.h_const = h_const;
  return p;
}

BiasProfile BiasProfile::control_horizon(double value, int horizon) {
  BiasProfile p;
  p.kind = BiasKind::control_horizon;
  p.value = value;
  p.horizon = horizon;
  return p;
}

BiasProfile BiasProfile::constant(std::map<SegmentKind, double> values) {
  BiasProfile p;
  p.kind = BiasKind::constant;
  p.constants = std::move(values);
  return p;
}

void BiasProfile::validate() const {
  auto non_negative = [](double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("bias profile: ") + what + " must be a finite value >= 0");
  };
  switch (kind) {
    case BiasKind::none: break;
    case BiasKind::dialog:
    case BiasKind::knowledge:
      non_negative(knowledge_value, "knowledge value");
      non_negative(history_value, "history value");
      break;
    case BiasKind::gradual_knowledge:
      if (!(cap > 0.0) || !std::isfinite(cap)) throw std::invalid_argument("bias profile: gradual cap must be > 0");
      if (!(slope > 0.0) || !std::isfinite(slope)) throw std::invalid_argument("bias profile: gradual slope must be > 0");
      non_negative(h_const, "history constant");
      break;
    case BiasKind::control_horizon:
      non_negative(value, "control value");
      if (horizon < 0) throw std::invalid_argument("bias profile: horizon must be >= 0");
      break;
    case BiasKind::constant:
      for (const auto& [kind, v] : constants) {
        if (kind == SegmentKind::pad) throw std::invalid_argument("bias profile: pad positions cannot be biased");
        non_negative(v, "constant");
      }
      break;
  }
}

BiasVector build_bias_vector(const BiasProfile& profile, std::span<const Segment> segments, int t) {
  if (segments.empty()) throw std::invalid_argument("build_bias_vector: empty segmentation");
  if (t < 0) throw std::invalid_argument("build_bias_vector: negative time step");
  profile.validate();
  if (std::all_of(segments.begin(), segments.end(), [](const Segment& s) { return s.is_pad(); })) {
    throw std::invalid_argument("build_bias_vector: all-pad context");
  }

  auto value_for = [&](SegmentKind kind) -> double {
    switch (profile.kind) {
      case BiasKind::none: return 1.0;
      case BiasKind::dialog:
      case BiasKind::knowledge:
        if (kind == SegmentKind::knowledge) return profile.knowledge_value;
        if (kind == SegmentKind::history) return profile.history_value;
        return 1.0;
      case BiasKind::gradual_knowledge:
        if (kind == SegmentKind::knowledge) return std::min(profile.slope * t, profile.cap);
        if (kind == SegmentKind::history) return profile.h_const;
        return 1.0;
      case BiasKind::control_horizon:
        if (t < profile.horizon && kind == SegmentKind::control_code) return profile.value;
        return 1.0;
      case BiasKind::constant: {
        auto it = profile.constants.find(kind);
        return it == profile.constants.end() ? 1.0 : it->second;
      }
    }
    return 1.0;
  };

  BiasVector b(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    b[i] = segments[i].is_pad() ? 0.0 : value_for(segments[i].kind);
  }
  return b;
}

RowVector apply_attention_bias(const RowVector& probs, std::span<const double> bias) {
  if (static_cast<std::size_t>(probs.size()) != bias.size()) {
    throw DimensionError("apply_attention_bias: length mismatch");
  }
  RowVector product(probs.size());
  for (Eigen::Index i = 0; i < probs.size(); ++i) product(i) = bias[static_cast<std::size_t>(i)] * probs(i);
  return renormalize_positive(product);
}

void SelfBiasProfile::validate() const {
  if (kind == SelfBiasKind::recency_linear_decay && window < 1) {
    throw std::invalid_argument("self-bias profile: window must be >= 1");
  }
}

BiasVector build_self_bias_vector(const SelfBiasProfile& profile, int t) {
  if (t < 0) throw std::invalid_argument("build_self_bias_vector: negative time step");
  profile.validate();
  BiasVector b(static_cast<std::size_t>(t) + 1, 1.0);
  if (profile.kind == SelfBiasKind::none) return b;
  const double w = profile.window;
  for (int pos = 0; pos < t; ++pos) {
    const int j = t - pos;
    b[static_cast<std::size_t>(pos)] = j <= profile.window ? std::max(1.0 - (j - 1) / w, 0.0) : 0.0;
  }
  return b;
}

std::string to_string(MixScope scope) {
  return scope == MixScope::self_attention_only ? "self_attention_only" : "full_decoder";
}

MixScope mix_scope_from_string(const std::string& name) {
  if (name == "full_decoder") return MixScope::full_decoder;
  if (name == "self_attention_only") return MixScope::self_attention_only;
  throw std::invalid_argument("unknown mix scope '" + name + "'");
}

void check_simplex(std::span<const double> alpha) {
  if (alpha.empty()) throw std::invalid_argument("mixing weights: empty alpha");
  double total = 0.0;
  for (double a : alpha) {
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("mixing weights: each alpha must lie in [0, 1]");
    total += a;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixing weights: alpha must sum to 1");
}

void MixSpec::validate(const ModelConfig& config) const {
  check_simplex(alpha);
  if (decoders.size() != alpha.size()) throw std::invalid_argument("mix spec: one alpha per decoder required");
  for (const auto& d : decoders) {
    if (!d) throw std::invalid_argument("mix spec: null decoder handle");
    if (!(d->config == config)) throw std::invalid_argument("mix spec: decoder configs differ from the generating model");
  }
  if (layers) {
    for (int l : *layers) {
      if (l < 0 || l >= config.n_dec_layers) throw std::invalid_argument("mix spec: layer index out of range");
    }
  }
}

bool MixSpec::applies_to(int layer) const {
  return !layers || std::find(layers->begin(), layers->end(), layer) != layers->end();
}

RowVector mix_layer_outputs(std::span<const RowVector> outputs, std::span<const double> alpha) {
  check_simplex(alpha);
  if (outputs.size() != alpha.size()) throw DimensionError("mix_layer_outputs: one weight per output required");
  const Eigen::Index n = outputs.front().size();
  RowVector out = RowVector::Zero(n);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (outputs[i].size() != n) throw DimensionError("mix_layer_outputs: dimension mismatch");
    out += alpha[i] * outputs[i];
  }
  return out;
}

ControlCode build_control_code(const EncodeFn& encoder, std::span<const std::vector<int>> phrases, int length,
                               int pad_id) {
  if (phrases.empty()) throw std::invalid_argument("build_control_code: empty phrase list");
  if (length < 1) throw std::invalid_argument("build_control_code: length must be >= 1");
  Matrix sum;
  for (const auto& phrase : phrases) {
    if (phrase.empty()) throw std::invalid_argument("build_control_code: empty phrase");
    SegmentedContext ctx;
    for (int i = 0; i < length; ++i) {
      const bool real = i < static_cast<int>(phrase.size());
      ctx.token_ids.push_back(real ? phrase[static_cast<std::size_t>(i)] : pad_id);
      ctx.segments.push_back(real ? Segment::control_code() : Segment::pad());
    }
    const Matrix encoded = encoder(ctx);
    if (sum.size() == 0) {
      sum = encoded;
    } else {
      if (encoded.rows() != sum.rows() || encoded.cols() != sum.cols()) throw DimensionError("build_control_code: encoder width changed");
      sum += encoded;
    }
  }
  ControlCode code;
  code.matrix = sum / static_cast<double>(phrases.size());
  code.source_count = static_cast<int>(phrases.size());
  return code;
}

AugmentedContext augment_context(const Matrix& memory, const ControlCode& code, std::span<const Segment> segments) {
  if (code.length() < 1) throw std::invalid_argument("augment_context: control code must have at least one row");
  if (code.matrix.cols() != memory.cols()) throw DimensionError("augment_context: width mismatch");
  if (static_cast<std::size_t>(memory.rows()) != segments.size()) throw DimensionError("augment_context: segment count mismatch");
  AugmentedContext out;
  out.memory.resize(code.length() + memory.rows(), memory.cols());
  out.memory.topRows(code.length()) = code.matrix;
  out.memory.bottomRows(memory.rows()) = memory;
  out.segments.assign(static_cast<std::size_t>(code.length()), Segment::control_code());
  out.segments.insert(out.segments.end(), segments.begin(), segments.end());
  return out;
}

FrobeniusReport frobenius_diff(const Parameters& a, const Parameters& b, ProjectionSelector selector) {
  if (a.decoder.size() != b.decoder.size()) throw DimensionError("frobenius_diff: decoder depth mismatch");
  if (a.decoder.empty()) throw DimensionError("frobenius_diff: no decoder layers");
  auto pick = [selector](const AttentionWeights& w) -> const Matrix& {
    switch (selector) {
      case ProjectionSelector::w_q: return w.w_q;
      case ProjectionSelector::w_k: return w.w_k;
      case ProjectionSelector::w_v: return w.w_v;
    }
    return w.w_q;
  };
  FrobeniusReport r;
  for (std::size_t l = 0; l < a.decoder.size(); ++l) {
    const Matrix& ma = pick(a.decoder[l].self_attn);
    const Matrix& mb = pick(b.decoder[l].self_attn);
    if (ma.rows() != mb.rows() || ma.cols() != mb.cols()) throw DimensionError("frobenius_diff: shape mismatch");
    r.avg_diff_norm += (ma - mb).norm();
    r.avg_norm += ma.norm();
  }
  r.avg_diff_norm /= static_cast<double>(a.decoder.size());
  r.avg_norm /= static_cast<double>(a.decoder.size());
  return r;
}

void swap_decoder_self_attention(Parameters& target, const Parameters& donor) {
  if (target.decoder.size() != donor.decoder.size()) throw DimensionError("swap: decoder depth mismatch");
  for (std::size_t l = 0; l < target.decoder.size(); ++l) {
    const auto& src = donor.decoder[l].self_attn;
    auto& dst = target.decoder[l].self_attn;
    if (src.w_q.rows() != dst.w_q.rows() || src.w_q.cols() != dst.w_q.cols()) throw DimensionError("swap: shape mismatch");
    dst = src;
  }
}

bool ActiveKnobs::biases_layer(int layer) const {
  return !bias_layers || std::find(bias_layers->begin(), bias_layers->end(), layer) != bias_layers->end();
}

void ActiveKnobs::validate(const ModelConfig& config) const {
  bias.validate();
  self_bias.validate();
  if (bias_layers) {
    for (int l : *bias_layers) {
      if (l < 0 || l >= config.n_dec_layers) throw std::invalid_argument("knobs: bias layer index out of range");
    }
  }
  if (mix) mix->validate(config);
  if (control_code) {
    if (control_code->length() < 1) throw std::invalid_argument("knobs: control code must have at least one row");
    if (control_code->matrix.cols() != config.d_model) throw DimensionError("knobs: control code width mismatch");
  }
}

}  // namespace edtk
