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

// Canonical JSON form of the knob settings. Mixing decoders are referenced by
// model id and control codes by their phrases, so a configuration can travel
// through files, HTTP bodies and sweep grids without carrying matrices.

#ifndef EDTK_KNOB_CONFIG_HPP
#define EDTK_KNOB_CONFIG_HPP

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "edtk/knobs.hpp"
#include "json.hpp"

namespace edtk {

/// Raised for malformed configuration documents; `field` is a JSON path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct MixConfig {
  std::vector<std::string> models;
  std::vector<double> alpha;
  MixScope scope = MixScope::full_decoder;
  std::optional<std::vector<int>> layers;

  friend bool operator==(const MixConfig&, const MixConfig&) = default;
};

struct ControlCodeConfig {
  std::vector<std::string> phrases;
  int length = kDefaultControlLength;

  friend bool operator==(const ControlCodeConfig&, const ControlCodeConfig&) = default;
};

struct KnobConfig {
  BiasProfile bias_profile;
  std::optional<std::vector<int>> bias_layers;
  SelfBiasProfile self_bias_profile;
  std::optional<MixConfig> mix;
  std::optional<ControlCodeConfig> control_code;

  bool empty() const { return *this == KnobConfig{}; }
  friend bool operator==(const KnobConfig&, const KnobConfig&) = default;
};

nlohmann::json bias_profile_to_json(const BiasProfile& p);
BiasProfile bias_profile_from_json(const nlohmann::json& j, const std::string& path = "bias_profile");

nlohmann::json knob_config_to_json(const KnobConfig& k);
/// Strict parser: unknown keys, wrong types and invariant violations raise
/// ConfigError naming the field.
KnobConfig knob_config_from_json(const nlohmann::json& j, const std::string& path = "knobs");

std::string serialize_knob_config(const KnobConfig& k);
KnobConfig parse_knob_config(const std::string& text);

using ModelLookup = std::function<std::shared_ptr<const Model>(const std::string& id)>;

/// Turns references into live knobs: looks up mixing decoders and encodes the
/// control phrases with `generator`'s encoder.
ActiveKnobs resolve_knobs(const KnobConfig& config, const Model& generator, const ModelLookup& lookup);

/// Encoder input for one control phrase: <s> followed by its words, unknown
/// words mapped to <unk>.
std::vector<int> encode_phrase(const Vocabulary& vocab, const std::string& phrase);

}  // namespace edtk

#endif  // EDTK_KNOB_CONFIG_HPP
