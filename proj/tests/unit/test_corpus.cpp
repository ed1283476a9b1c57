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
#include <filesystem>
#include <set>

#include "doctest.h"
#include "edtk/corpus.hpp"

using namespace edtk;

namespace {

CorpusSpec small_spec(std::uint64_t seed = 3) {
  CorpusSpec s;
  s.n_dialogs = 400;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("corpus generation is deterministic per seed") {
  const Corpus a = generate_corpus(small_spec()), b = generate_corpus(small_spec());
  CHECK(a.train == b.train);
  CHECK(a.rare == b.rare);
  CHECK(a.vocab == b.vocab);
  CHECK(generate_corpus(small_spec(4)).train != a.train);
  CHECK(a.train.size() == 320);
  CHECK(a.valid.size() == 40);
  CHECK(a.test.size() == 40);
  CHECK(a.rare.size() == 40);
  for (const Dialog& d : a.train) CHECK(d.turns.size() == 5);
}

TEST_CASE("rare facts never reach the main splits") {
  const Corpus c = generate_corpus(small_spec());
  std::set<std::string> seen;
  for (const auto* split : {&c.train, &c.valid, &c.test}) {
    for (const Dialog& d : *split) seen.insert(d.knowledge);
  }
  for (const Dialog& d : c.rare) CHECK_FALSE(seen.contains(d.knowledge));
}

TEST_CASE("question-only weights give questions") {
  CorpusSpec s = small_spec();
  s.style_weights = {{ResponseStyle::question, 1.0}, {ResponseStyle::plain, 0.0}};
  for (const Dialog& d : generate_corpus(s).train) {
    CHECK(d.style == ResponseStyle::question);
    CHECK(d.response.back() == '?');
  }
  s.style_weights = {{ResponseStyle::feedback, 1.0}};
  for (const Dialog& d : generate_corpus(s).train) CHECK(d.response.find('?') == std::string::npos);
}

TEST_CASE("questions in the history raise the question rate") {
  CorpusSpec s = small_spec();
  s.n_dialogs = 3000;
  s.question_affinity = 2.0;
  const Corpus c = generate_corpus(s);
  int q_with = 0, n_with = 0, q_without = 0, n_without = 0;
  for (const Dialog& d : c.train) {
    const bool asked = std::any_of(d.turns.begin(), d.turns.end(), [](const std::string& t) { return t.back() == '?'; });
    (asked ? n_with : n_without)++;
    if (d.style == ResponseStyle::question) (asked ? q_with : q_without)++;
  }
  REQUIRE(n_with > 100);
  REQUIRE(n_without > 100);
  CHECK(static_cast<double>(q_with) / n_with > static_cast<double>(q_without) / n_without);
}

TEST_CASE("spec validation") {
  CorpusSpec s;
  s.style_weights = {{ResponseStyle::plain, 0.5}};
  CHECK_THROWS(s.validate());
  s = CorpusSpec{};
  s.n_rare_facts = s.n_facts;
  CHECK_THROWS(s.validate());
  s = CorpusSpec{};
  s.history_question_rate = 1.5;
  CHECK_THROWS(s.validate());
  CHECK_NOTHROW(CorpusSpec{}.validate());
}

TEST_CASE("bucket lengths") {
  CHECK(Buckets::desk().context_length() == 58);
  CHECK(Buckets::full().context_length() == 163);
}

TEST_CASE("format_example pads each section at its tail") {
  Vocabulary v;
  for (const char* w : {"cats", "like", "fish", "hi", "there", "."}) v.add(w);
  const std::vector<std::string> history = {"hi", "", "hi there", "", "hi"};
  const FormattedExample ex = format_example(v, "cats like fish", history, "hi .", Buckets::desk());
  const auto& ctx = ex.encoder_input;
  REQUIRE(ctx.size() == 58);
  CHECK(ctx.token_ids[0] == Vocabulary::kBos);
  CHECK(ctx.token_ids[1] == v.id("cats"));
  CHECK(ctx.token_ids[3] == v.id("fish"));
  CHECK(std::count(ctx.token_ids.begin() + 4, ctx.token_ids.begin() + 13, Vocabulary::kPad) == 9);
  CHECK(std::all_of(ctx.segments.begin() + 4, ctx.segments.begin() + 13, [](const Segment& s) { return s.is_pad(); }));
  CHECK(ctx.count(SegmentKind::knowledge) == 4);
  CHECK(ctx.count(SegmentKind::history) == 5 + 4);
  CHECK(ctx.segments[13] == Segment::history(0));
  CHECK(ctx.token_ids[13 + 9 * 4] == Vocabulary::kSpeaker1);
  CHECK(ctx.token_ids[13 + 9 * 3] == Vocabulary::kSpeaker2);
  CHECK(ex.decoder_target == std::vector<int>{Vocabulary::kBos, v.id("hi"), v.id("."), Vocabulary::kEos});
  CHECK_NOTHROW(ctx.validate());

  CHECK_THROWS_AS(format_example(v, "dogs", history, "hi", Buckets::desk()), UnknownTokenError);
  const FormattedExample lenient = format_example(v, "dogs", history, "hi", Buckets::desk(), true);
  CHECK(lenient.encoder_input.token_ids[1] == Vocabulary::kUnk);
}

TEST_CASE("long sections are truncated") {
  Vocabulary v;
  v.add("a");
  const std::string many = "a a a a a a a a a a a a a a a a a a a a";
  const FormattedExample ex = format_example(v, many, {many, many, many, many, many}, "a", Buckets::desk());
  CHECK(ex.encoder_input.size() == 58);
  CHECK(ex.encoder_input.count(SegmentKind::pad) == 0);
}

TEST_CASE("copy task targets reproduce one context section") {
  const Corpus c = generate_corpus(small_spec());
  const auto examples = format_copy_task(c.vocab, c.train, Buckets::desk(), 5);
  REQUIRE(examples.size() == c.train.size());
  for (const auto& ex : examples) {
    const std::vector<int> body(ex.decoder_target.begin() + 1, ex.decoder_target.end() - 1);
    std::vector<int> present;
    for (std::size_t i = 0; i < ex.encoder_input.size(); ++i) {
      const int id = ex.encoder_input.token_ids[i];
      if (!Vocabulary::is_special(id)) present.push_back(id);
    }
    CHECK(present == body);
  }
}

TEST_CASE("response LM examples carry no context words") {
  const Corpus c = generate_corpus(small_spec());
  for (const auto& ex : format_response_lm(c.vocab, c.test, Buckets::desk())) {
    for (int id : ex.encoder_input.token_ids) CHECK(Vocabulary::is_special(id));
  }
}

TEST_CASE("jsonl round trip") {
  const Corpus c = generate_corpus(small_spec());
  const auto path = std::filesystem::temp_directory_path() / "edtk_corpus_roundtrip.jsonl";
  write_jsonl(c.valid, path);
  const auto back = read_jsonl(path);
  REQUIRE(back.size() == c.valid.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].knowledge == c.valid[i].knowledge);
    CHECK(back[i].turns == c.valid[i].turns);
    CHECK(back[i].response == c.valid[i].response);
    CHECK(back[i].style == c.valid[i].style);
  }
  std::filesystem::remove(path);
  CHECK_THROWS(read_jsonl(path));
}

TEST_CASE("vocabulary covers every split") {
  const Corpus c = generate_corpus(small_spec());
  const Vocabulary v = build_vocabulary({&c.train, &c.rare});
  for (const auto* split : {&c.train, &c.rare}) {
    for (const Dialog& d : *split) CHECK_NOTHROW(format_example(v, d, Buckets::desk()));
  }
  for (const auto& p : question_phrases()) CHECK(p.back() == '?');
}
