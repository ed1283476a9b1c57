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

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "edtk/generation.hpp"
#include "edtk/training.hpp"
#include "support.hpp"

using namespace edtk;
using edtk::testing::gradient_check;
using edtk::testing::random_example;
using edtk::testing::tiny_model;
using edtk::testing::TinySpec;

namespace {

std::vector<FormattedExample> random_batch(std::uint64_t seed, int vocab, int n, int len = 5) {
  Rng rng(seed);
  std::vector<FormattedExample> out;
  for (int i = 0; i < n; ++i) out.push_back(random_example(rng, vocab, len));
  return out;
}

}  // namespace

TEST_CASE("uniform logits give ln V") {
  Model m = tiny_model(1);
  m.params.token_embedding.setZero();
  const auto batch = random_batch(2, m.config.vocab_size, 3);
  const LossAndGrads r = loss_and_grads(m, batch);
  CHECK(r.loss == doctest::Approx(std::log(m.config.vocab_size)).epsilon(1e-12));
  CHECK(r.tokens == 3 * 5);
}

TEST_CASE("analytic gradients match central differences") {
  for (auto variant : {DecoderVariant::sequential, DecoderVariant::parallel}) {
    TinySpec spec;
    spec.variant = variant;
    const Model m = tiny_model(5, spec);
    const auto batch = random_batch(6, m.config.vocab_size, 2, 4);
    LossOptions plain, biased, recency;
    biased.cross_bias = BiasProfile::knowledge(5.0, 1.0);
    recency.self_bias = SelfBiasProfile::recency(2);
    recency.cross_bias = BiasProfile::gradual_knowledge(3.0, 1.0, 0.5);
    for (const LossOptions* opts : {&plain, &biased, &recency}) {
      const auto report = gradient_check(m, batch, *opts);
      CAPTURE(report.worst);
      CHECK(report.max_rel <= 1e-4);
      CHECK(report.entries == static_cast<long>(m.params.scalar_count()));
    }
  }
}

TEST_CASE("biasing changes the loss only when it is not uniform") {
  const Model m = tiny_model(7);
  const auto batch = random_batch(8, m.config.vocab_size, 2);
  LossOptions ones, five;
  ones.cross_bias = BiasProfile::knowledge(1.0, 1.0);
  five.cross_bias = BiasProfile::knowledge(5.0, 1.0);
  const double base = loss_and_grads(m, batch).loss;
  CHECK(std::fabs(loss_and_grads(m, batch, ones).loss - base) <= 1e-12);
  CHECK(std::fabs(loss_and_grads(m, batch, five).loss - base) > 1e-6);
}

TEST_CASE("freeze masks") {
  const Model m = tiny_model(1, TinySpec{.dec_layers = 2});
  const ModelConfig& c = m.config;
  CHECK(make_freeze_mask({}, c).frozen.empty());

  const FreezeMask mask = make_freeze_mask({FreezeKind::decoder_except_cross_attention, {}, {}}, c);
  std::set<std::string> expected = {"decoder.emb_norm.gain", "decoder.emb_norm.shift"};
  for (int l = 0; l < 2; ++l) {
    const std::string p = "decoder." + std::to_string(l) + ".";
    for (const char* t : {"self_attn.w_q", "self_attn.w_k", "self_attn.w_v", "self_attn.w_o", "self_norm.gain",
                          "self_norm.shift", "cross_norm.gain", "cross_norm.shift", "ffn.w1", "ffn.b1", "ffn.w2",
                          "ffn.b2", "ffn_norm.gain", "ffn_norm.shift"}) {
      expected.insert(p + t);
    }
  }
  CHECK(mask.frozen == expected);
  for (const auto& name : m.params.names()) {
    if (name.find("cross_attn") != std::string::npos || !name.starts_with("decoder.")) CHECK_FALSE(mask.is_frozen(name));
  }

  // Direct count: the decoder embedding norm plus, per layer, 4 d^2 attention + 2d self norm + 2d cross norm + FFN + 2d ffn norm per layer.
  const long d = c.d_model, f = c.d_ff;
  const long per_layer = 4 * d * d + 2 * d + 2 * d + (d * f + f + f * d + d) + 2 * d;
  CHECK(static_cast<long>(m.params.scalar_count() - mask.trainable_scalars(m.params)) == 2 * d + 2 * per_layer);

  FreezeScheme custom{FreezeKind::custom, {}, {}};
  for (const auto& name : m.params.names()) custom.custom[name] = name.starts_with("encoder.");
  const auto names = m.params.names();
  CHECK(make_freeze_mask(custom, c).frozen.size() ==
        static_cast<std::size_t>(
            std::count_if(names.begin(), names.end(), [](const std::string& n) { return n.starts_with("encoder."); })));
  custom.custom["bogus"] = true;
  CHECK_THROWS(make_freeze_mask(custom, c));
  custom.custom.erase("bogus");
  custom.custom.erase(custom.custom.begin());
  CHECK_THROWS(make_freeze_mask(custom, c));
}

TEST_CASE("frozen tensors get zero gradient and never move") {
  const Model m = tiny_model(3, TinySpec{.dec_layers = 2});
  const auto batch = random_batch(4, m.config.vocab_size, 4);
  const FreezeMask mask = make_freeze_mask({FreezeKind::decoder_except_cross_attention, {}, {}}, m.config);
  const LossAndGrads r = loss_and_grads(m, batch, {}, &mask);
  r.grads.for_each([&](const std::string& name, const Matrix& g) {
    if (mask.is_frozen(name)) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  });

  Model trained = m;
  AdamState state = AdamState::zeros_like(trained.params);
  Rng rng(9);
  for (int step = 0; step < 20; ++step) {
    LossOptions opts{0.1, &rng};
    const LossAndGrads g = loss_and_grads(trained, batch, opts, &mask);
    adam_step(trained.params, g.grads, state, AdamConfig{1e-2}, &mask);
  }
  for_each_pair(trained.params, m.params, [&](const std::string& name, const Matrix& a, const Matrix& b) {
    if (mask.is_frozen(name)) {
      CHECK(a == b);
    } else if (name.find("cross_attn") != std::string::npos) {
      CHECK(a != b);
    }
  });
}

TEST_CASE("adam closed form and edge cases") {
  const Model m = tiny_model(1);
  Parameters p = m.params, g = m.params.zeros_like();
  AdamState state = AdamState::zeros_like(p);
  g.token_embedding(6, 0) = 1.0;
  g.token_embedding(6, 1) = -3.0;
  const double before0 = p.token_embedding(6, 0), before1 = p.token_embedding(6, 1);
  adam_step(p, g, state, AdamConfig{1e-3});
  // First bias-corrected step moves each entry by lr * g / (|g| + eps').
  CHECK(p.token_embedding(6, 0) - before0 == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(p.token_embedding(6, 1) - before1 == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(state.m.token_embedding(6, 0) == doctest::Approx(0.1));
  CHECK(state.v.token_embedding(6, 1) == doctest::Approx(0.009));

  // Zero gradient: parameters stay put while the moments decay.
  const Parameters snapshot = p;
  const double m_before = state.m.token_embedding(6, 0), v_before = state.v.token_embedding(6, 0);
  adam_step(p, p.zeros_like(), state, AdamConfig{1e-3});
  CHECK(state.m.token_embedding(6, 0) == doctest::Approx(0.9 * m_before));
  CHECK(state.v.token_embedding(6, 0) == doctest::Approx(0.999 * v_before));
  // The bias-corrected first moment is still non-zero, so decayed momentum moves it;
  // entries that never saw a gradient stay bit-identical.
  CHECK(p.token_embedding(7, 0) == snapshot.token_embedding(7, 0));
  CHECK(p.encoder[0].ffn.w1 == snapshot.encoder[0].ffn.w1);

  FreezeMask mask;
  mask.frozen.insert("embed.token");
  Parameters q = m.params;
  AdamState s2 = AdamState::zeros_like(q);
  adam_step(q, g, s2, AdamConfig{1e-3}, &mask);
  CHECK(q.token_embedding == m.params.token_embedding);
  CHECK(s2.m.token_embedding.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS(adam_step(q, g, s2, AdamConfig{0.0}));
}

TEST_CASE("early stopping rule") {
  const std::vector<double> ppl = {30, 20, 21};
  CHECK(early_stop_epoch(ppl, 1) == 3);
  CHECK(early_stop_epoch(ppl, 2) == -1);
  const std::vector<double> improving = {30, 20, 10, 5};
  CHECK(early_stop_epoch(improving, 1) == -1);
  const std::vector<double> flat = {10, 10, 10, 9};
  CHECK(early_stop_epoch(flat, 2) == 3);
}

TEST_CASE("train returns the best epoch and is deterministic") {
  const Model m = tiny_model(11);
  const auto train_set = random_batch(12, m.config.vocab_size, 20);
  const auto valid_set = random_batch(13, m.config.vocab_size, 5);
  TrainConfig cfg;
  cfg.lr = 5e-3;
  cfg.max_epochs = 6;
  cfg.batch_size = 4;
  cfg.grad_accum = 2;
  cfg.seed = 4;
  const TrainResult a = train(m, train_set, valid_set, cfg);
  const TrainResult b = train(m, train_set, valid_set, cfg);
  REQUIRE(!a.history.empty());
  CHECK(a.valid_ppl() == b.valid_ppl());
  for_each_pair(a.best, b.best, [](const std::string&, const Matrix& x, const Matrix& y) { CHECK(x == y); });

  const auto ppl = a.valid_ppl();
  const auto best = std::min_element(ppl.begin(), ppl.end()) - ppl.begin();
  CHECK(a.best_epoch == best + 1);
  Model restored = m;
  restored.params = a.best;
  const double reval = perplexity(restored, valid_set);
  CHECK(reval == doctest::Approx(ppl[static_cast<std::size_t>(best)]).epsilon(1e-9));
  if (a.early_stopped) CHECK(static_cast<int>(ppl.size()) == early_stop_epoch(ppl, cfg.patience));

  TrainConfig bad = cfg;
  bad.lr = 0.0;
  CHECK_THROWS(train(m, train_set, valid_set, bad));
  bad = cfg;
  bad.patience = -1;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("train config json round trip") {
  TrainConfig c;
  c.lr = 6.25e-5;
  c.freeze.kind = FreezeKind::decoder_except_cross_attention;
  c.freeze.dec_self_attn_init = SelfAttentionInit::random;
  nlohmann::json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(back.lr == c.lr);
  CHECK(back.freeze.kind == c.freeze.kind);
  CHECK(back.freeze.dec_self_attn_init == SelfAttentionInit::random);
  CHECK(back.grad_accum == 4);
}

TEST_CASE("a copy-capable model overfits sixteen examples") {
  TinySpec spec;
  spec.d_model = 32;
  spec.n_heads = 4;
  spec.d_ff = 64;
  Model m = tiny_model(21, spec);
  Rng init(21);
  m.params = init_parameters(m.config, init);
  Rng rng(22);
  std::vector<FormattedExample> set;
  for (int i = 0; i < 16; ++i) {
    FormattedExample ex;
    ex.encoder_input = edtk::testing::random_context(rng, m.config.vocab_size, 4, 0, 0, 0);
    ex.decoder_target.assign(ex.encoder_input.token_ids.begin(), ex.encoder_input.token_ids.end());
    ex.decoder_target.push_back(Vocabulary::kEos);
    set.push_back(std::move(ex));
  }
  AdamState state = AdamState::zeros_like(m.params);
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) {
    const LossAndGrads g = loss_and_grads(m, set);
    losses.push_back(g.loss);
    adam_step(m.params, g.grads, state, AdamConfig{1e-2});
  }
  losses.push_back(loss_and_grads(m, set).loss);
  CAPTURE(losses);
  for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] < losses[i - 1]);
  CHECK(losses.back() <= 0.1);
}
