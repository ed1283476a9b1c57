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

#include "doctest.h"
#include "edtk/metrics.hpp"
#include "edtk/sweep.hpp"
#include "support.hpp"

using namespace edtk;
using edtk::testing::random_context;
using edtk::testing::tiny_model;

namespace {

std::vector<SweepContext> contexts_for(const Model& m, int n) {
  Rng rng(5);
  std::vector<SweepContext> out;
  for (int i = 0; i < n; ++i) {
    SweepContext c;
    c.example.encoder_input = random_context(rng, m.config.vocab_size, 3, 2, 2, 1);
    c.example.decoder_target = edtk::testing::random_tokens(rng, m.config.vocab_size, 4);
    c.example.decoder_target.push_back(Vocabulary::kEos);
    const auto& ids = c.example.encoder_input.token_ids;
    c.knowledge = m.vocab.decode(std::span<const int>(ids).subspan(1, 3));
    c.reference = m.vocab.decode(c.example.decoder_target);
    out.push_back(std::move(c));
  }
  return out;
}

GenerationConfig gen() {
  GenerationConfig g;
  g.max_len = 12;
  g.seed = 3;
  return g;
}

SweepOptions options(int seeds) {
  SweepOptions o;
  o.n_seeds = seeds;
  o.bootstrap_resamples = 200;
  return o;
}

}  // namespace

TEST_CASE("a base-only grid equals direct computation") {
  const Model m = tiny_model(1);
  const auto contexts = contexts_for(m, 6);
  const std::vector<SweepCell> grid = {{"base", {}}};
  const auto rows = knob_sweep(m, {}, contexts, grid, gen(), options(3));
  REQUIRE(rows.size() == 1);
  double f1 = 0.0, rouge = 0.0, q = 0.0;
  std::vector<FormattedExample> examples;
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    examples.push_back(contexts[c].example);
    for (int k = 0; k < 3; ++k) {
      Rng rng = sample_stream(gen().seed + static_cast<std::uint64_t>(k), c);
      const GenerationResult r = generate(m, contexts[c].example.encoder_input, {}, gen(), rng);
      f1 += unigram_f1(r.text, contexts[c].knowledge);
      rouge += rouge_l(r.text, contexts[c].knowledge);
      q += has_question(r.text) ? 1.0 : 0.0;
    }
  }
  CHECK(rows[0].f1_k.mean == doctest::Approx(f1 / 18).epsilon(1e-12));
  CHECK(rows[0].rouge_l_k.mean == doctest::Approx(rouge / 18).epsilon(1e-12));
  CHECK(rows[0].question_rate_turn.mean == doctest::Approx(q / 18).epsilon(1e-12));
  CHECK(rows[0].ppl_r.value() == doctest::Approx(perplexity(m, examples)).epsilon(1e-12));
  CHECK(rows[0].sample_count == 18);
  CHECK_FALSE(rows[0].f1_k.diff.has_value());
  CHECK(rows[0].f1_k.per_seed.size() == 3);
}

TEST_CASE("identical cells give identical rows") {
  const Model m = tiny_model(2);
  const auto contexts = contexts_for(m, 5);
  KnobConfig k;
  k.bias_profile = BiasProfile::knowledge(5.0, 1.0);
  const std::vector<SweepCell> grid = {{"a", k}, {"b", k}};
  const auto rows = knob_sweep(m, {}, contexts, grid, gen(), options(2));
  CHECK(rows[0].f1_k.mean == rows[1].f1_k.mean);
  CHECK(rows[0].f1_k.per_seed == rows[1].f1_k.per_seed);
  CHECK(rows[0].question_rate_sentence.mean == rows[1].question_rate_sentence.mean);
  CHECK(rows[0].ppl_r == rows[1].ppl_r);
  CHECK(*rows[1].f1_k.diff == 0.0);
  CHECK(rows[1].f1_k.diff_ci->low == 0.0);
  CHECK(rows[1].f1_k.diff_ci->high == 0.0);
}

TEST_CASE("grid specs expand to one cell per value") {
  const auto cells = parse_grid_spec("bk=1,2,5,10,50", KnobConfig{});
  REQUIRE(cells.size() == 5);
  CHECK(cells[2].label == "bk=5");
  CHECK(cells[2].knobs.bias_profile == BiasProfile::knowledge(5.0, 1.0));
  CHECK(parse_grid_spec("bk=1,5;bh=1,2", KnobConfig{}).size() == 4);
  CHECK(parse_grid_spec("window=2,4", KnobConfig{})[1].knobs.self_bias_profile == SelfBiasProfile::recency(4));
  CHECK_THROWS_AS(parse_grid_spec("bk=x", KnobConfig{}), ConfigError);
  CHECK_THROWS_AS(parse_grid_spec("volume=1", KnobConfig{}), ConfigError);
  CHECK_THROWS_AS(parse_grid_spec("bk=-1", KnobConfig{}), ConfigError);
  CHECK_THROWS_AS(parse_grid_spec("", KnobConfig{}), ConfigError);

  const Model m = tiny_model(3);
  const auto rows = knob_sweep(m, {}, contexts_for(m, 3), cells, gen(), options(1));
  CHECK(rows.size() == 5);
  const std::string table = format_report_table(rows);
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);
  CHECK(report_to_json(rows[1]).at("label") == "bk=2");
}

TEST_CASE("paired bootstrap") {
  const std::vector<double> base = {0, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<double> up = {1, 1.2, 0.8, 1.1, 0.9, 1, 1.05, 0.95};
  const auto [ci, p] = paired_bootstrap(up, base, 2000, 1);
  CHECK(ci.low > 0.8);
  CHECK(ci.high < 1.2);
  CHECK(p == 0.0);
  const auto [ci0, p0] = paired_bootstrap(base, base, 100, 1);
  CHECK(ci0.low == 0.0);
  CHECK(p0 == 1.0);
  const std::vector<double> noisy = {1, -1, 1, -1, 1, -1, 1, -1};
  CHECK(paired_bootstrap(noisy, base, 2000, 2).second > 0.3);
  CHECK(paired_bootstrap(up, base, 500, 7).first.low == paired_bootstrap(up, base, 500, 7).first.low);
  const std::vector<double> shorter = {1.0};
  CHECK_THROWS(paired_bootstrap(shorter, base, 10, 1));
}

TEST_CASE("sweep argument checks") {
  const Model m = tiny_model(4);
  const auto contexts = contexts_for(m, 2);
  CHECK_THROWS(knob_sweep(m, {}, contexts, {}, gen(), options(1)));
  CHECK_THROWS(knob_sweep(m, {}, {}, {{"base", {}}}, gen(), options(1)));
  CHECK_THROWS(knob_sweep(m, {}, contexts, {{"base", {}}}, gen(), options(0)));
}
