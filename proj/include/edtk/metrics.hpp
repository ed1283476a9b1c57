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

// Overlap metrics and question counting on whitespace-tokenized text.

#ifndef EDTK_METRICS_HPP
#define EDTK_METRICS_HPP

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace edtk {

/// Lowercased whitespace tokens with punctuation characters removed; tokens
/// that become empty are dropped.
std::vector<std::string> normalize_tokens(std::string_view text);

/// Clipped-count unigram F1. Zero when there is no overlap, including when
/// either side is empty.
double unigram_f1(std::string_view candidate, std::string_view reference);

/// Longest-common-subsequence F-measure with beta = 1. Zero for an empty
/// candidate or reference.
double rouge_l(std::string_view candidate, std::string_view reference);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct QuestionCounts {
  std::size_t turn_level = 0;
  std::size_t sentence_level = 0;
};

/// Sentences end at runs of '.', '!' or '?'. A sentence counts as a question
/// when its terminator run contains '?'.
QuestionCounts count_questions(std::span<const std::string> responses);
bool has_question(std::string_view response);

}  // namespace edtk

#endif  // EDTK_METRICS_HPP
