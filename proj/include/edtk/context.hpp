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

#ifndef EDTK_CONTEXT_HPP
#define EDTK_CONTEXT_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace edtk {

enum class SegmentKind : std::uint8_t { control_code, knowledge, history, pad };

/// Segment label for one context position. `turn` is meaningful for history only.
struct Segment {
  SegmentKind kind = SegmentKind::pad;
  int turn = 0;

  static Segment control_code() { return {SegmentKind::control_code, 0}; }
  static Segment knowledge() { return {SegmentKind::knowledge, 0}; }
  static Segment history(int turn) { return {SegmentKind::history, turn}; }
  static Segment pad() { return {SegmentKind::pad, 0}; }

  bool is_pad() const { return kind == SegmentKind::pad; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

std::string to_string(SegmentKind kind);
SegmentKind segment_kind_from_string(const std::string& name);

/// Encoder input: token ids with a parallel array of segment labels.
struct SegmentedContext {
  std::vector<int> token_ids;
  std::vector<Segment> segments;

  std::size_t size() const { return token_ids.size(); }
  /// Throws std::invalid_argument when the arrays disagree or runs are split.
  void validate() const;
  std::vector<std::uint8_t> key_mask() const;
  std::size_t count(SegmentKind kind) const;
};

}  // namespace edtk

#endif  // EDTK_CONTEXT_HPP
