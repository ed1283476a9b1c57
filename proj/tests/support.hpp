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

// Small fixtures shared by the test binaries.

#ifndef EDTK_TESTS_SUPPORT_HPP
#define EDTK_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "edtk/context.hpp"
#include "edtk/corpus.hpp"
#include "edtk/knob_config.hpp"
#include "edtk/model.hpp"
#include "edtk/rng.hpp"
#include "edtk/training.hpp"
#include "edtk/vocab.hpp"

namespace edtk::testing {

inline Vocabulary tiny_vocab(int words) {
  Vocabulary v;
  for (int i = 0; i < words; ++i) v.add("w" + std::to_string(i));
  return v;
}

struct TinySpec {
  int d_model = 8;
  int n_heads = 2;
  int enc_layers = 1;
  int dec_layers = 1;
  int d_ff = 16;
  int words = 18;
  int max_positions = 32;
  DecoderVariant variant = DecoderVariant::sequential;
  std::vector<int> cross_layers = {-1};  // {-1}: every layer
};

inline Model tiny_model(std::uint64_t seed, const TinySpec& spec = {}) {
  Vocabulary vocab = tiny_vocab(spec.words);
  ModelConfig c;
  c.vocab_size = vocab.size();
  c.d_model = spec.d_model;
  c.n_heads = spec.n_heads;
  c.n_enc_layers = spec.enc_layers;
  c.n_dec_layers = spec.dec_layers;
  c.d_ff = spec.d_ff;
  c.max_positions = spec.max_positions;
  c.decoder_variant = spec.variant;
  c.cross_attn_layers = spec.cross_layers == std::vector<int>{-1} ? ModelConfig::all_layers(spec.dec_layers)
                                                                  : spec.cross_layers;
  Rng rng(seed);
  Parameters p = init_parameters(c, rng);
  // Larger weights than the 0.02 init so attention rows are far from uniform.
  Rng jitter(seed, 99);
  p.for_each([&](const std::string&, Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += 0.3 * jitter.normal();
  });
  return Model{c, std::move(p), std::move(vocab)};
}

/// <s>, `k` knowledge tokens, then `turns` history runs of `turn_len` tokens
/// with a speaker token each, then `pads` pad positions.
inline SegmentedContext random_context(Rng& rng, int vocab_size, int k, int turns, int turn_len, int pads) {
  SegmentedContext c;
  auto word = [&] { return static_cast<int>(Vocabulary::kUnk + 1 + rng.below(vocab_size - Vocabulary::kUnk - 1)); };
  c.token_ids.push_back(Vocabulary::kBos);
  c.segments.push_back(Segment::knowledge());
  for (int i = 0; i < k; ++i) {
    c.token_ids.push_back(word());
    c.segments.push_back(Segment::knowledge());
  }
  for (int t = 0; t < turns; ++t) {
    c.token_ids.push_back(t % 2 == 0 ? Vocabulary::kSpeaker1 : Vocabulary::kSpeaker2);
    c.segments.push_back(Segment::history(t));
    for (int i = 0; i < turn_len; ++i) {
      c.token_ids.push_back(word());
      c.segments.push_back(Segment::history(t));
    }
  }
  for (int i = 0; i < pads; ++i) {
    c.token_ids.push_back(Vocabulary::kPad);
    c.segments.push_back(Segment::pad());
  }
  return c;
}

inline std::vector<int> random_tokens(Rng& rng, int vocab_size, int n) {
  std::vector<int> ids{Vocabulary::kBos};
  for (int i = 1; i < n; ++i) ids.push_back(static_cast<int>(Vocabulary::kUnk + 1 + rng.below(vocab_size - 6)));
  return ids;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

/// Random context plus a random <s> ... </s> target.
inline FormattedExample random_example(Rng& rng, int vocab_size, int target_len) {
  FormattedExample ex;
  ex.encoder_input = random_context(rng, vocab_size, 3, 2, 2, 2);
  ex.decoder_target = random_tokens(rng, vocab_size, target_len);
  ex.decoder_target.push_back(Vocabulary::kEos);
  return ex;
}

struct GradCheckReport {
  double max_rel = 0.0;
  std::string worst;
  long entries = 0;
};

/// Compares every analytic gradient entry with a central difference.
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckReport gradient_check(const Model& model, std::span<const FormattedExample> batch,
                                      const LossOptions& options, double eps = 1e-5, double floor = 1e-6) {
  const LossAndGrads analytic = loss_and_grads(model, batch, options);
  Model probe = model;
  GradCheckReport report;
  std::vector<const Matrix*> grads;
  analytic.grads.for_each([&](const std::string&, const Matrix& g) { grads.push_back(&g); });
  std::size_t tensor = 0;
  probe.params.for_each([&](const std::string& name, Matrix& p) {
    const Matrix& g = *grads[tensor++];
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + eps;
      const double up = loss_and_grads(probe, batch, options).loss;
      p.data()[i] = saved - eps;
      const double down = loss_and_grads(probe, batch, options).loss;
      p.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = g.data()[i];
      const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), floor});
      if (rel > report.max_rel) {
        report.max_rel = rel;
        report.worst = name + "[" + std::to_string(i) + "]";
      }
      ++report.entries;
    }
  });
  return report;
}

inline double positive(Rng& rng) { return 0.01 + 20.0 * rng.uniform(); }

inline std::vector<int> some_layers(Rng& rng) {
  std::vector<int> out;
  for (int l = 0; l < 4; ++l) {
    if (rng.uniform() < 0.5) out.push_back(l);
  }
  return out;
}

inline KnobConfig random_knob_config(Rng& rng) {
  KnobConfig k;
  switch (rng.below(6)) {
    case 0: break;
    case 1: k.bias_profile = BiasProfile::dialog(positive(rng), positive(rng)); break;
    case 2: k.bias_profile = BiasProfile::knowledge(positive(rng), positive(rng)); break;
    case 3: k.bias_profile = BiasProfile::gradual_knowledge(positive(rng), positive(rng), positive(rng)); break;
    case 4: k.bias_profile = BiasProfile::control_horizon(positive(rng), static_cast<int>(rng.below(20))); break;
    default:
      k.bias_profile = BiasProfile::constant({{SegmentKind::knowledge, positive(rng)}, {SegmentKind::history, positive(rng)}});
  }
  if (rng.uniform() < 0.3) k.bias_layers = some_layers(rng);
  if (rng.uniform() < 0.4) k.self_bias_profile = SelfBiasProfile::recency(1 + static_cast<int>(rng.below(8)));
  if (rng.uniform() < 0.4) {
    MixConfig m;
    const double a = rng.uniform();
    m.models = {"base", "other"};
    m.alpha = {a, 1.0 - a};
    m.scope = rng.uniform() < 0.5 ? MixScope::full_decoder : MixScope::self_attention_only;
    if (rng.uniform() < 0.5) m.layers = some_layers(rng);
    k.mix = m;
  }
  if (rng.uniform() < 0.4) {
    ControlCodeConfig c;
    c.phrases = {"do you like it ?"};
    if (rng.uniform() < 0.5) c.phrases.push_back("what about music ?");
    c.length = 1 + static_cast<int>(rng.below(20));
    k.control_code = c;
  }
  return k;
}


}  // namespace edtk::testing

#endif  // EDTK_TESTS_SUPPORT_HPP
