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

// Random service requests for round-trip tests.

#ifndef EDTK_TESTS_SERVICE_SUPPORT_HPP
#define EDTK_TESTS_SERVICE_SUPPORT_HPP

#include <string>

#include "edtk/service.hpp"
#include "support.hpp"

namespace edtk::testing {

/// Space-separated tiny-vocabulary words.
inline std::string random_words(Rng& rng, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) out += (i ? " w" : "w") + std::to_string(rng.below(18));
  return out;
}

inline GenerateRequest random_request(Rng& rng) {
  GenerateRequest r;
  r.model_id = rng.uniform() < 0.5 ? "base" : "other";
  r.knowledge = random_words(rng, static_cast<int>(rng.below(6)));
  const auto turns = rng.below(6);
  for (std::uint64_t t = 0; t < turns; ++t) r.history.push_back(random_words(rng, static_cast<int>(rng.below(5))));
  r.knobs = random_knob_config(rng);
  r.gen.top_p = 0.05 + 0.95 * rng.uniform();
  r.gen.temperature = 0.1 + 2.0 * rng.uniform();
  r.gen.max_len = 1 + static_cast<int>(rng.below(40));
  r.trace = rng.uniform() < 0.5;
  r.seed = rng.next_u64();
  return r;
}

}  // namespace edtk::testing

#endif  // EDTK_TESTS_SERVICE_SUPPORT_HPP
