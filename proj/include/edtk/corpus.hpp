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

// Synthetic knowledge-grounded dialog corpus and bucketed input formatting.
//
// Each dialog pairs one fact with a five-turn chit-chat history and a
// response in one of four styles. Plain and question responses copy nouns
// from the history or the fact, knowledge_copying responses restate the fact,
// question responses end in '?', feedback responses copy nothing. Several
// templates tie their ending to an earlier word of the response.
// Questions in the history make a question response more likely.

#ifndef EDTK_CORPUS_HPP
#define EDTK_CORPUS_HPP

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "edtk/context.hpp"
#include "edtk/vocab.hpp"

namespace edtk {

enum class ResponseStyle { plain, knowledge_copying, question, feedback };

std::string to_string(ResponseStyle style);
ResponseStyle response_style_from_string(const std::string& name);

struct CorpusSpec {
  int n_dialogs = 5000;
  int turn_count = 5;
  std::map<ResponseStyle, double> style_weights{{ResponseStyle::plain, 0.3},
                                                {ResponseStyle::knowledge_copying, 0.3},
                                                {ResponseStyle::question, 0.2},
                                                {ResponseStyle::feedback, 0.2}};
  /// Question weight is scaled by (1 + affinity * question turns in history).
  double question_affinity = 1.0;
  /// Probability that a history turn is a question.
  double history_question_rate = 0.3;
  /// Probability that a copied slot in a plain or question response comes
  /// from the fact rather than the history.
  double knowledge_slot_rate = 0.3;
  int n_facts = 600;
  /// Facts reserved for the rare split and never used in train/valid/test.
  int n_rare_facts = 100;
  int max_vocab = 512;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Dialog {
  std::string knowledge;
  std::vector<std::string> turns;
  std::string response;
  ResponseStyle style = ResponseStyle::plain;
  int fact_id = -1;

  friend bool operator==(const Dialog&, const Dialog&) = default;
};

struct Corpus {
  std::vector<Dialog> train;
  std::vector<Dialog> valid;
  std::vector<Dialog> test;
  /// Dialogs about facts that never occur in the other splits.
  std::vector<Dialog> rare;
  Vocabulary vocab;
};

/// Deterministic per seed. Splits are 80/10/10 of n_dialogs, plus a rare
/// split of n_dialogs / 10. Throws std::length_error on vocabulary overflow.
Corpus generate_corpus(const CorpusSpec& spec);

struct Buckets {
  int knowledge = 12;
  int turn = 8;
  int turns = 5;

  /// 1 + knowledge + turns * (1 + turn)
  int context_length() const { return 1 + knowledge + turns * (1 + turn); }
  static Buckets desk() { return {}; }
  static Buckets full() { return {32, 25, 5}; }
};

struct FormattedExample {
  SegmentedContext encoder_input;
  /// <s> response </s>
  std::vector<int> decoder_target;
};

/// <s> + knowledge bucket + one speaker token and bucket per turn. Sections
/// are truncated or padded at their tail. Unknown words raise
/// UnknownTokenError unless `lenient`, which maps them to <unk>.
FormattedExample format_example(const Vocabulary& vocab, const std::string& knowledge,
                                const std::vector<std::string>& history, const std::string& response,
                                const Buckets& buckets, bool lenient = false);
FormattedExample format_example(const Vocabulary& vocab, const Dialog& dialog, const Buckets& buckets);
std::vector<FormattedExample> format_all(const Vocabulary& vocab, const std::vector<Dialog>& dialogs,
                                         const Buckets& buckets);

/// Copy-task examples: one segment of the dialog (knowledge, a turn or the
/// response) placed alone in its bucket, with that segment as the target.
/// The response is placed in the knowledge bucket.
std::vector<FormattedExample> format_copy_task(const Vocabulary& vocab, const std::vector<Dialog>& dialogs,
                                               const Buckets& buckets, std::uint64_t seed);

/// Response-only examples with an empty context (just <s> and speaker
/// tokens), used to train a context-free fluency scorer.
std::vector<FormattedExample> format_response_lm(const Vocabulary& vocab, const std::vector<Dialog>& dialogs,
                                                 const Buckets& buckets);
FormattedExample blank_context_example(const Vocabulary& vocab, const std::string& response, const Buckets& buckets);

/// One JSON object per line: {knowledge, turns, response, style}.
void write_jsonl(const std::vector<Dialog>& dialogs, const std::filesystem::path& path);
std::vector<Dialog> read_jsonl(const std::filesystem::path& path);

/// Vocabulary covering every word of the given dialogs.
Vocabulary build_vocabulary(const std::vector<const std::vector<Dialog>*>& splits);

/// Phrases that carry the question attribute, for building control codes.
std::vector<std::string> question_phrases();

}  // namespace edtk

#endif  // EDTK_CORPUS_HPP
