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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "edtk/generation.hpp"
#include "edtk/training.hpp"
#include "edtk/transformer.hpp"
#include "support.hpp"

using namespace edtk;
using edtk::testing::random_context;
using edtk::testing::random_example;
using edtk::testing::tiny_model;
using edtk::testing::TinySpec;

namespace {

GenerationConfig short_gen() {
  GenerationConfig g;
  g.max_len = 20;
  return g;
}

GenerationResult run(const Model& m, const SegmentedContext& ctx, const ActiveKnobs& knobs, std::uint64_t seed,
                     const TraceOptions& trace = {}) {
  Rng rng(seed);
  return generate(m, ctx, knobs, short_gen(), rng, trace);
}

}  // namespace

TEST_CASE("nucleus filter examples") {
  const RowVector logits = RowVector{{std::log(0.6), std::log(0.3), std::log(0.1)}};
  const RowVector kept = nucleus_filter(logits, 0.9, 1.0);
  CHECK(kept(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(kept(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(kept(2) == 0.0);

  const RowVector full = nucleus_filter(logits, 1.0, 1.0);
  CHECK((full - RowVector{{0.6, 0.3, 0.1}}).cwiseAbs().maxCoeff() <= 1e-12);

  const RowVector cold = nucleus_filter(RowVector{{0.1, 0.5, 0.45}}, 1.0, 1e-3);
  CHECK(cold(1) > 0.999);

  // Equal probabilities at the threshold: the lower id is kept.
  const RowVector tie = nucleus_filter(RowVector{{0.0, 0.0, 0.0, 0.0}}, 0.5, 1.0);
  CHECK(tie == RowVector{{0.5, 0.5, 0.0, 0.0}});

  CHECK_THROWS(nucleus_filter(logits, 0.0, 1.0));
  CHECK_THROWS(nucleus_filter(logits, 0.9, 0.0));
  CHECK_THROWS(nucleus_filter(RowVector{{0.0, std::nan("")}}, 0.9, 1.0));
}

TEST_CASE("nucleus kept set is the minimal descending prefix") {
  Rng rng(41);
  for (int rep = 0; rep < 2000; ++rep) {
    const int n = 2 + static_cast<int>(rng.below(30));
    RowVector logits(n);
    for (int i = 0; i < n; ++i) logits(i) = 3.0 * rng.normal();
    const double top_p = 0.05 + 0.9 * rng.uniform();
    const double temperature = 0.2 + 1.5 * rng.uniform();
    const RowVector out = nucleus_filter(logits, top_p, temperature);

    std::vector<long double> p(static_cast<std::size_t>(n));
    long double z = 0;
    const double peak = logits.maxCoeff();
    for (int i = 0; i < n; ++i) z += p[static_cast<std::size_t>(i)] = std::exp(static_cast<long double>(logits(i) - peak) / temperature);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)]; });
    long double mass = 0;
    std::size_t keep = 0;
    while (keep < order.size() && mass / z < top_p) mass += p[static_cast<std::size_t>(order[keep++])];

    CHECK(std::fabs(out.sum() - 1.0) <= 1e-12);
    for (std::size_t i = 0; i < order.size(); ++i) {
      const int id = order[i];
      if (i < keep) {
        CHECK(std::fabs(out(id) - static_cast<double>(p[static_cast<std::size_t>(id)] / mass)) <= 1e-12);
      } else {
        CHECK(out(id) == 0.0);
      }
    }
  }
}

TEST_CASE("generation is deterministic and ends consistently") {
  const Model m = tiny_model(3);
  Rng ctx_rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const SegmentedContext ctx = random_context(ctx_rng, m.config.vocab_size, 3, 2, 2, 1);
    const GenerationResult a = run(m, ctx, {}, 100 + rep), b = run(m, ctx, {}, 100 + rep);
    CHECK(a.tokens == b.tokens);
    CHECK(a.text == b.text);
    const bool eos = !a.tokens.empty() && a.tokens.back() == Vocabulary::kEos;
    CHECK(eos == (a.stop_reason == StopReason::eos));
    if (!eos) CHECK(static_cast<int>(a.tokens.size()) == short_gen().max_len);
  }
}

TEST_CASE("all-ones biasing reproduces knob-free generation") {
  const Model m = tiny_model(5);
  Rng ctx_rng(6);
  ActiveKnobs ones;
  ones.bias = BiasProfile::knowledge(1.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const SegmentedContext ctx = random_context(ctx_rng, m.config.vocab_size, 3, 2, 2, 2);
    CHECK(run(m, ctx, ones, rep).tokens == run(m, ctx, {}, rep).tokens);
  }
}

TEST_CASE("mixing with alpha [1, 0] is the single decoder") {
  const Model m = tiny_model(7, TinySpec{.dec_layers = 2});
  auto self = std::make_shared<const Model>(m);
  auto other = std::make_shared<const Model>(tiny_model(8, TinySpec{.dec_layers = 2}));
  Rng ctx_rng(9);
  for (auto scope : {MixScope::full_decoder, MixScope::self_attention_only}) {
    ActiveKnobs mix;
    mix.mix = MixSpec{{self, other}, {1.0, 0.0}, scope, std::nullopt};
    ActiveKnobs half = mix;
    half.mix->alpha = {0.5, 0.5};
    int differs = 0;
    for (int rep = 0; rep < 20; ++rep) {
      const SegmentedContext ctx = random_context(ctx_rng, m.config.vocab_size, 3, 2, 2, 0);
      const auto base = run(m, ctx, {}, rep);
      CHECK(run(m, ctx, mix, rep).tokens == base.tokens);
      differs += run(m, ctx, half, rep).tokens != base.tokens;
    }
    CHECK(differs > 0);
  }
}

TEST_CASE("perplexity oracles") {
  SUBCASE("uniform model gives the vocabulary size") {
    for (int words : {1, 18}) {
      Model m = tiny_model(1, TinySpec{.words = words});
      m.params.token_embedding.setZero();
      FormattedExample ex;
      ex.encoder_input.token_ids = {1, 3, 3};
      ex.encoder_input.segments = {Segment::knowledge(), Segment::knowledge(), Segment::history(0)};
      ex.decoder_target = {1, 3, 2, 6, 2};
      const std::vector<FormattedExample> set = {ex};
      CHECK(perplexity(m, set) == doctest::Approx(static_cast<double>(m.config.vocab_size)).epsilon(1e-12));
    }
  }
  SUBCASE("certain model") {
    Model m = tiny_model(1);
    const int gold = 9;
    auto& last = m.params.decoder.back().ffn_norm;
    last.gain.setZero();
    last.shift.setZero();
    last.shift(0, 0) = 100.0;
    m.params.token_embedding.col(0).setZero();
    m.params.token_embedding(gold, 0) = 1.0;
    Rng rng(2);
    FormattedExample ex = random_example(rng, m.config.vocab_size, 4);
    ex.decoder_target = {Vocabulary::kBos, gold, gold, gold};
    const std::vector<FormattedExample> set = {ex};
    CHECK(perplexity(m, set) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("probability product") {
    const Model m = tiny_model(3);
    Rng rng(4);
    std::vector<FormattedExample> set;
    for (int i = 0; i < 3; ++i) set.push_back(random_example(rng, m.config.vocab_size, 3 + i));
    long double log_prod = 0;
    long n = 0;
    for (const auto& ex : set) {
      const std::span<const int> target(ex.decoder_target);
      const Matrix logits = teacher_forced_logits(m, ex.encoder_input, target.first(target.size() - 1));
      for (Eigen::Index t = 0; t < logits.rows(); ++t) {
        long double z = 0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) z += std::exp(static_cast<long double>(logits(t, j)));
        log_prod += std::log(std::exp(static_cast<long double>(logits(t, target[static_cast<std::size_t>(t) + 1]))) / z);
        ++n;
      }
    }
    const double oracle = static_cast<double>(std::exp(-log_prod / n));
    CHECK(std::fabs(perplexity(m, set) - oracle) <= 1e-9);
  }
  const std::vector<FormattedExample> none;
  CHECK_THROWS(perplexity(tiny_model(1), none));
}

TEST_CASE("biased perplexity agrees with the tape") {
  const Model m = tiny_model(13);
  Rng rng(14);
  std::vector<FormattedExample> set;
  for (int i = 0; i < 3; ++i) set.push_back(random_example(rng, m.config.vocab_size, 5));
  ActiveKnobs knobs;
  knobs.bias = BiasProfile::gradual_knowledge(5.0, 1.0, 1.0);
  knobs.self_bias = SelfBiasProfile::recency(2);
  LossOptions opts;
  opts.cross_bias = knobs.bias;
  opts.self_bias = knobs.self_bias;
  const double tape = std::exp(loss_and_grads(m, set, opts).loss);
  CHECK(perplexity(m, set, knobs) == doctest::Approx(tape).epsilon(1e-10));
}

TEST_CASE("traces cover every generated token") {
  const Model m = tiny_model(15, TinySpec{.dec_layers = 2, .cross_layers = {1}});
  Rng ctx_rng(16);
  const SegmentedContext ctx = random_context(ctx_rng, m.config.vocab_size, 3, 2, 2, 2);
  ActiveKnobs knobs;
  knobs.bias = BiasProfile::knowledge();
  const GenerationResult r = run(m, ctx, knobs, 1, TraceOptions{true, 40});
  REQUIRE(r.traces.size() == r.tokens.size());
  CHECK(r.memory_segments == ctx.segments);
  for (const auto& step : r.traces) {
    REQUIRE(step.layers.size() == 2);
    for (std::size_t l = 0; l < 2; ++l) {
      const auto& layer = step.layers[l];
      CHECK(layer.self.post_bias.rows() == m.config.n_heads);
      for (Eigen::Index h = 0; h < m.config.n_heads; ++h) CHECK(std::fabs(layer.self.post_bias.row(h).sum() - 1.0) <= 1e-9);
      CHECK(layer.cross.has_value() == (l == 1));
      if (layer.cross) {
        CHECK(layer.cross->post_bias.rows() == m.config.n_heads);
        CHECK(layer.cross->post_bias.cols() == static_cast<Eigen::Index>(ctx.size()));
        for (Eigen::Index h = 0; h < m.config.n_heads; ++h) {
          CHECK(std::fabs(layer.cross->post_bias.row(h).sum() - 1.0) <= 1e-9);
          CHECK(std::fabs(layer.cross->pre_bias.row(h).sum() - 1.0) <= 1e-9);
        }
      }
    }
  }
  const GenerationResult capped = run(m, ctx, knobs, 1, TraceOptions{true, 2});
  CHECK(capped.traces.size() == std::min<std::size_t>(2, capped.tokens.size()));
  CHECK(run(m, ctx, knobs, 1).traces.empty());
}

TEST_CASE("control codes extend the memory") {
  const Model m = tiny_model(17);
  Rng ctx_rng(18);
  const SegmentedContext ctx = random_context(ctx_rng, m.config.vocab_size, 3, 2, 2, 0);
  ActiveKnobs knobs;
  const EncodeFn enc = [&](const SegmentedContext& c) { return encode(m, c); };
  const std::vector<std::vector<int>> phrases = {{Vocabulary::kBos, 7, 8}};
  knobs.control_code = build_control_code(enc, phrases, 4, Vocabulary::kPad);
  const PreparedMemory mem = prepare_memory(m, ctx, knobs);
  CHECK(mem.memory.rows() == static_cast<Eigen::Index>(ctx.size()) + 4);
  CHECK(mem.segments.front() == Segment::control_code());
  knobs.bias = BiasProfile::control_horizon(5.0, 6);
  CHECK_NOTHROW(run(m, ctx, knobs, 3));
}

TEST_CASE("generation config validation") {
  GenerationConfig g;
  CHECK_NOTHROW(g.validate());
  g.top_p = 1.5;
  CHECK_THROWS(g.validate());
  g = {};
  g.max_len = 0;
  CHECK_THROWS(g.validate());
  g = {};
  g.temperature = 0.0;
  CHECK_THROWS(g.validate());
  const Model m = tiny_model(1);
  Rng rng(1), ctx_rng(2);
  const SegmentedContext ctx = random_context(ctx_rng, m.config.vocab_size, 3, 1, 1, 0);
  CHECK_THROWS(generate(m, ctx, {}, GenerationConfig{}, rng));  // 40 > 32 positions
}
