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

#include "edtk/knob_config.hpp"

#include <set>

#include "edtk/transformer.hpp"

namespace edtk {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!keys.contains(key)) throw ConfigError(path + "." + key, "unknown field");
  }
}

double number_at(const json& j, const std::string& key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(path + "." + key, "expected a number");
  return v.get<double>();
}

int integer_at(const json& j, const std::string& key, const std::string& path, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(path + "." + key, "expected an integer");
  return v.get<int>();
}

std::optional<std::vector<int>> layers_from_json(const json& j, const std::string& path) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_array()) throw ConfigError(path, "expected an array of layer indices or null");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number_integer() || j[i].get<int>() < 0) {
      throw ConfigError(path + "[" + std::to_string(i) + "]", "expected a non-negative integer");
    }
    out.push_back(j[i].get<int>());
  }
  return out;
}

json layers_to_json(const std::optional<std::vector<int>>& layers) {
  return layers ? json(*layers) : json(nullptr);
}

template <typename Fn>
auto guarded(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace

nlohmann::json bias_profile_to_json(const BiasProfile& p) {
  json j;
  j["kind"] = to_string(p.kind);
  switch (p.kind) {
    case BiasKind::none: break;
    case BiasKind::dialog:
    case BiasKind::knowledge:
      j["knowledge"] = p.knowledge_value;
      j["history"] = p.history_value;
      break;
    case BiasKind::gradual_knowledge:
      j["cap"] = p.cap;
      j["slope"] = p.slope;
      j["h_const"] = p.h_const;
      break;
    case BiasKind::control_horizon:
      j["value"] = p.value;
      j["horizon"] = p.horizon;
      break;
    case BiasKind::constant: {
      json values = json::object();
      for (const auto& [kind, v] : p.constants) values[to_string(kind)] = v;
      j["values"] = std::move(values);
      break;
    }
  }
  return j;
}

BiasProfile bias_profile_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  if (!j.contains("kind") || !j.at("kind").is_string()) throw ConfigError(path + ".kind", "expected a profile name");
  const BiasKind kind = guarded(path + ".kind", [&] { return bias_kind_from_string(j.at("kind").get<std::string>()); });
  BiasProfile p;
  switch (kind) {
    case BiasKind::none:
      require_object(j, path, {"kind"});
      break;
    case BiasKind::dialog:
    case BiasKind::knowledge: {
      require_object(j, path, {"kind", "knowledge", "history"});
      const BiasProfile d = kind == BiasKind::dialog ? BiasProfile::dialog() : BiasProfile::knowledge();
      p = kind == BiasKind::dialog
              ? BiasProfile::dialog(number_at(j, "knowledge", path, d.knowledge_value), number_at(j, "history", path, d.history_value))
              : BiasProfile::knowledge(number_at(j, "knowledge", path, d.knowledge_value),
                                       number_at(j, "history", path, d.history_value));
      break;
    }
    case BiasKind::gradual_knowledge:
      require_object(j, path, {"kind", "cap", "slope", "h_const"});
      p = BiasProfile::gradual_knowledge(number_at(j, "cap", path, 5.0), number_at(j, "slope", path, 0.5),
                                         number_at(j, "h_const", path, 1.0));
      break;
    case BiasKind::control_horizon:
      require_object(j, path, {"kind", "value", "horizon"});
      p = BiasProfile::control_horizon(number_at(j, "value", path, 5.0), integer_at(j, "horizon", path, 6));
      break;
    case BiasKind::constant: {
      require_object(j, path, {"kind", "values"});
      std::map<SegmentKind, double> values;
      if (j.contains("values")) {
        const json& v = j.at("values");
        if (!v.is_object()) throw ConfigError(path + ".values", "expected an object of segment -> value");
        for (const auto& [name, value] : v.items()) {
          const SegmentKind sk = guarded(path + ".values." + name, [&] { return segment_kind_from_string(name); });
          if (!value.is_number()) throw ConfigError(path + ".values." + name, "expected a number");
          values[sk] = value.get<double>();
        }
      }
      p = BiasProfile::constant(std::move(values));
      break;
    }
  }
  guarded(path, [&] {
    p.validate();
    return 0;
  });
  return p;
}

nlohmann::json knob_config_to_json(const KnobConfig& k) {
  json j;
  j["bias_profile"] = bias_profile_to_json(k.bias_profile);
  j["bias_layers"] = layers_to_json(k.bias_layers);
  json self;
  self["kind"] = k.self_bias_profile.kind == SelfBiasKind::none ? "none" : "recency_linear_decay";
  if (k.self_bias_profile.kind == SelfBiasKind::recency_linear_decay) self["window"] = k.self_bias_profile.window;
  j["self_bias_profile"] = std::move(self);
  if (k.mix) {
    j["mix"] = {{"models", k.mix->models},
                {"alpha", k.mix->alpha},
                {"scope", to_string(k.mix->scope)},
                {"layers", layers_to_json(k.mix->layers)}};
  } else {
    j["mix"] = nullptr;
  }
  if (k.control_code) {
    j["control_code"] = {{"phrases", k.control_code->phrases}, {"length", k.control_code->length}};
  } else {
    j["control_code"] = nullptr;
  }
  return j;
}

KnobConfig knob_config_from_json(const nlohmann::json& j, const std::string& path) {
  require_object(j, path, {"bias_profile", "bias_layers", "self_bias_profile", "mix", "control_code"});
  KnobConfig k;
  if (j.contains("bias_profile")) k.bias_profile = bias_profile_from_json(j.at("bias_profile"), path + ".bias_profile");
  if (j.contains("bias_layers")) k.bias_layers = layers_from_json(j.at("bias_layers"), path + ".bias_layers");

  if (j.contains("self_bias_profile")) {
    const std::string sp = path + ".self_bias_profile";
    const json& s = j.at("self_bias_profile");
    require_object(s, sp, {"kind", "window"});
    const std::string kind = s.value("kind", std::string("none"));
    if (kind == "none") {
      if (s.contains("window")) throw ConfigError(sp + ".window", "window is only valid for recency_linear_decay");
    } else if (kind == "recency_linear_decay") {
      k.self_bias_profile = SelfBiasProfile::recency(integer_at(s, "window", sp, 4));
      if (k.self_bias_profile.window < 1) throw ConfigError(sp + ".window", "window must be >= 1");
    } else {
      throw ConfigError(sp + ".kind", "unknown self-bias profile '" + kind + "'");
    }
  }

  if (j.contains("mix") && !j.at("mix").is_null()) {
    const std::string mp = path + ".mix";
    const json& m = j.at("mix");
    require_object(m, mp, {"models", "alpha", "scope", "layers"});
    MixConfig mix;
    if (!m.contains("models") || !m.at("models").is_array() || m.at("models").empty()) {
      throw ConfigError(mp + ".models", "expected a non-empty array of model ids");
    }
    for (std::size_t i = 0; i < m.at("models").size(); ++i) {
      const json& id = m.at("models")[i];
      if (!id.is_string()) throw ConfigError(mp + ".models[" + std::to_string(i) + "]", "expected a string");
      mix.models.push_back(id.get<std::string>());
    }
    if (!m.contains("alpha") || !m.at("alpha").is_array()) throw ConfigError(mp + ".alpha", "expected an array of weights");
    for (std::size_t i = 0; i < m.at("alpha").size(); ++i) {
      const json& a = m.at("alpha")[i];
      if (!a.is_number()) throw ConfigError(mp + ".alpha[" + std::to_string(i) + "]", "expected a number");
      mix.alpha.push_back(a.get<double>());
    }
    if (mix.alpha.size() != mix.models.size()) throw ConfigError(mp + ".alpha", "one weight per model required");
    guarded(mp + ".alpha", [&] {
      check_simplex(mix.alpha);
      return 0;
    });
    if (m.contains("scope")) {
      if (!m.at("scope").is_string()) throw ConfigError(mp + ".scope", "expected a string");
      mix.scope = guarded(mp + ".scope", [&] { return mix_scope_from_string(m.at("scope").get<std::string>()); });
    }
    if (m.contains("layers")) mix.layers = layers_from_json(m.at("layers"), mp + ".layers");
    k.mix = std::move(mix);
  }

  if (j.contains("control_code") && !j.at("control_code").is_null()) {
    const std::string cp = path + ".control_code";
    const json& c = j.at("control_code");
    require_object(c, cp, {"phrases", "length"});
    ControlCodeConfig code;
    if (!c.contains("phrases") || !c.at("phrases").is_array() || c.at("phrases").empty()) {
      throw ConfigError(cp + ".phrases", "expected a non-empty array of phrases");
    }
    for (std::size_t i = 0; i < c.at("phrases").size(); ++i) {
      const json& p = c.at("phrases")[i];
      if (!p.is_string() || Vocabulary::tokenize(p.get<std::string>()).empty()) {
        throw ConfigError(cp + ".phrases[" + std::to_string(i) + "]", "expected a non-empty string");
      }
      code.phrases.push_back(p.get<std::string>());
    }
    code.length = integer_at(c, "length", cp, kDefaultControlLength);
    if (code.length < 1) throw ConfigError(cp + ".length", "length must be >= 1");
    k.control_code = std::move(code);
  }
  return k;
}

std::string serialize_knob_config(const KnobConfig& k) { return knob_config_to_json(k).dump(); }

KnobConfig parse_knob_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("knobs", std::string("malformed JSON: ") + e.what());
  }
  return knob_config_from_json(j);
}

std::vector<int> encode_phrase(const Vocabulary& vocab, const std::string& phrase) {
  std::vector<int> ids{Vocabulary::kBos};
  for (const auto& word : Vocabulary::tokenize(phrase)) ids.push_back(vocab.contains(word) ? vocab.id(word) : Vocabulary::kUnk);
  return ids;
}

ActiveKnobs resolve_knobs(const KnobConfig& config, const Model& generator, const ModelLookup& lookup) {
  ActiveKnobs knobs;
  knobs.bias = config.bias_profile;
  knobs.bias_layers = config.bias_layers;
  knobs.self_bias = config.self_bias_profile;
  if (config.mix) {
    MixSpec mix;
    for (std::size_t i = 0; i < config.mix->models.size(); ++i) {
      std::shared_ptr<const Model> m = lookup ? lookup(config.mix->models[i]) : nullptr;
      if (!m) {
        throw ConfigError("knobs.mix.models[" + std::to_string(i) + "]",
                          "unknown model '" + config.mix->models[i] + "'");
      }
      mix.decoders.push_back(std::move(m));
    }
    mix.alpha = config.mix->alpha;
    mix.scope = config.mix->scope;
    mix.layers = config.mix->layers;
    knobs.mix = std::move(mix);
  }
  if (config.control_code) {
    std::vector<std::vector<int>> phrases;
    for (const auto& p : config.control_code->phrases) phrases.push_back(encode_phrase(generator.vocab, p));
    const EncodeFn encoder = [&generator](const SegmentedContext& ctx) { return encode(generator, ctx); };
    knobs.control_code = build_control_code(encoder, phrases, config.control_code->length, Vocabulary::kPad);
  }
  guarded("knobs", [&] {
    knobs.validate(generator.config);
    return 0;
  });
  return knobs;
}

}  // namespace edtk
