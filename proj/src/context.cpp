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

#include "edtk/context.hpp"

#include <set>
#include <stdexcept>
#include <utility>

namespace edtk {

std::string to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::control_code: return "control_code";
    case SegmentKind::knowledge: return "knowledge";
    case SegmentKind::history: return "history";
    case SegmentKind::pad: return "pad";
  }
  return "pad";
}

SegmentKind segment_kind_from_string(const std::string& name) {
  if (name == "control_code") return SegmentKind::control_code;
  if (name == "knowledge") return SegmentKind::knowledge;
  if (name == "history") return SegmentKind::history;
  if (name == "pad") return SegmentKind::pad;
  throw std::invalid_argument("unknown segment kind '" + name + "'");
}

void SegmentedContext::validate() const {
  if (token_ids.size() != segments.size()) {
    throw std::invalid_argument("segmented context: token and segment arrays differ in length");
  }
  // A non-pad segment may not reappear after a different non-pad segment started.
  std::set<std::pair<SegmentKind, int>> closed;
  std::pair<SegmentKind, int> current{SegmentKind::pad, -1};
  for (const Segment& s : segments) {
    if (s.is_pad()) continue;
    const std::pair<SegmentKind, int> key{s.kind, s.kind == SegmentKind::history ? s.turn : 0};
    if (key == current) continue;
    if (closed.contains(key)) throw std::invalid_argument("segmented context: segment runs are not contiguous");
    if (current.second != -1) closed.insert(current);
    current = key;
  }
}

std::vector<std::uint8_t> SegmentedContext::key_mask() const {
  std::vector<std::uint8_t> mask(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) mask[i] = segments[i].is_pad() ? 0 : 1;
  return mask;
}

std::size_t SegmentedContext::count(SegmentKind kind) const {
  std::size_t n = 0;
  for (const Segment& s : segments) n += s.kind == kind ? 1 : 0;
  return n;
}

}  // namespace edtk
