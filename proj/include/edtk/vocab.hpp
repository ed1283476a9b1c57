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

#ifndef EDTK_VOCAB_HPP
#define EDTK_VOCAB_HPP

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace edtk {

class UnknownTokenError : public std::invalid_argument {
 public:
  explicit UnknownTokenError(const std::string& token)
      : std::invalid_argument("unknown token '" + token + "'"), token_(token) {}
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

/// Word-level vocabulary. Ids 0..5 are reserved for the special tokens.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSpeaker1 = 3;
  static constexpr int kSpeaker2 = 4;
  static constexpr int kUnk = 5;

  Vocabulary();
  /// Rebuilds from a full token list (specials first, as produced by tokens()).
  explicit Vocabulary(std::vector<std::string> tokens);

  int add(const std::string& word);
  int id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Lowercases, splits on whitespace and detaches . , ! ? as separate tokens.
  static std::vector<std::string> tokenize(std::string_view text);
  /// Throws UnknownTokenError for out-of-vocabulary words.
  std::vector<int> encode(std::string_view text) const;
  /// Whitespace join; special tokens are dropped.
  std::string decode(std::span<const int> ids) const;

  static bool is_special(int id) { return id >= 0 && id <= kUnk; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace edtk

#endif  // EDTK_VOCAB_HPP
