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

#include "edtk/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace edtk {

std::vector<std::string> normalize_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (!std::ispunct(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

double unigram_f1(std::string_view candidate, std::string_view reference) {
  const auto c = normalize_tokens(candidate);
  const auto r = normalize_tokens(reference);
  if (c.empty() || r.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& w : r) ++counts[w];
  int overlap = 0;
  for (const auto& w : c) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(c.size());
  const double rec = static_cast<double>(overlap) / static_cast<double>(r.size());
  return 2.0 * p * rec / (p + rec);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = normalize_tokens(candidate);
  const auto r = normalize_tokens(reference);
  if (c.empty() || r.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(c, r));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(c.size());
  const double rec = lcs / static_cast<double>(r.size());
  return 2.0 * p * rec / (p + rec);
}

namespace {

std::size_t question_sentences(std::string_view text) {
  std::size_t n = 0;
  bool in_terminators = false;
  bool run_has_question = false;
  for (char c : text) {
    const bool term = c == '.' || c == '!' || c == '?';
    if (term) {
      in_terminators = true;
      run_has_question = run_has_question || c == '?';
    } else if (in_terminators) {
      n += run_has_question ? 1 : 0;
      in_terminators = false;
      run_has_question = false;
    }
  }
  n += in_terminators && run_has_question ? 1 : 0;
  return n;
}

}  // namespace

bool has_question(std::string_view response) { return question_sentences(response) > 0; }

QuestionCounts count_questions(std::span<const std::string> responses) {
  QuestionCounts q;
  for (const auto& r : responses) {
    const std::size_t n = question_sentences(r);
    q.sentence_level += n;
    q.turn_level += n > 0 ? 1 : 0;
  }
  return q;
}

}  // namespace edtk
