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

#include "edtk/service.hpp"

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <utility>

#include "edtk/metrics.hpp"
#include "edtk/sweep.hpp"
#include "httplib.h"

namespace edtk {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; });
    if (!known) throw ConfigError(path + "." + key, "unknown field");
  }
}

const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  return j;
}

std::string string_field(const json& j, const std::string& key, const std::string& path, bool required) {
  if (!j.contains(key)) {
    if (required) throw ConfigError(path + "." + key, "missing required field");
    return {};
  }
  if (!j[key].is_string()) throw ConfigError(path + "." + key, "expected a string");
  return j[key].get<std::string>();
}

double number_field(const json& j, const std::string& key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ConfigError(path + "." + key, "expected a number");
  return j[key].get<double>();
}

std::int64_t integer_field(const json& j, const std::string& key, const std::string& path, std::int64_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw ConfigError(path + "." + key, "expected an integer");
  return j[key].get<std::int64_t>();
}

GenerationConfig gen_config_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  reject_unknown_keys(j, path, {"top_p", "temperature", "max_len"});
  GenerationConfig g;
  g.top_p = number_field(j, "top_p", path, g.top_p);
  g.temperature = number_field(j, "temperature", path, g.temperature);
  g.max_len = static_cast<int>(integer_field(j, "max_len", path, g.max_len));
  if (!(g.top_p > 0.0 && g.top_p <= 1.0)) throw ConfigError(path + ".top_p", "must lie in (0, 1]");
  if (!(g.temperature > 0.0)) throw ConfigError(path + ".temperature", "must be > 0");
  if (g.max_len < 1) throw ConfigError(path + ".max_len", "must be >= 1");
  return g;
}

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json attention_json(const AttentionTrace& t) {
  return {{"pre_bias", matrix_rows(t.pre_bias)}, {"post_bias", matrix_rows(t.post_bias)}};
}

json segment_json(const Segment& s) {
  json j = {{"kind", to_string(s.kind)}};
  if (s.kind == SegmentKind::history) j["turn"] = s.turn;
  return j;
}

HttpReply error_reply(int status, const std::string& message, const std::string& field = {}) {
  json body = {{"error", message}};
  if (!field.empty()) body["field"] = field;
  return {status, std::move(body)};
}

// Runs `fn`, mapping configuration problems to 400.
template <typename Fn>
HttpReply guarded_reply(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    return error_reply(400, e.what(), e.field());
  } catch (const json::exception& e) {
    return error_reply(400, std::string("malformed JSON: ") + e.what(), "body");
  } catch (const std::invalid_argument& e) {
    return error_reply(400, e.what());
  } catch (const std::out_of_range& e) {
    return error_reply(400, e.what());
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
}

json parse_body(const std::string& body) {
  json j = json::parse(body);
  require_object(j, "body");
  return j;
}

std::vector<std::string> history_field(const json& j, const std::string& path) {
  std::vector<std::string> out;
  if (!j.contains("history")) return out;
  const json& h = j["history"];
  if (!h.is_array()) throw ConfigError(path + ".history", "expected an array of strings");
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!h[i].is_string()) throw ConfigError(path + ".history[" + std::to_string(i) + "]", "expected a string");
    out.push_back(h[i].get<std::string>());
  }
  return out;
}

// Short histories are left-padded with empty turns so the last turn stays
// adjacent to the response.
FormattedExample format_request_context(const Vocabulary& vocab, const std::string& knowledge,
                                        std::vector<std::string> history, const Buckets& buckets,
                                        const std::string& reference = {}) {
  const auto turns = static_cast<std::size_t>(buckets.turns);
  if (history.size() > turns) {
    throw ConfigError("history", "has " + std::to_string(history.size()) + " turns, at most " +
                                     std::to_string(turns) + " allowed");
  }
  history.insert(history.begin(), turns - history.size(), std::string{});
  return format_example(vocab, knowledge, history, reference, buckets, true);
}

ModelLookup registry_lookup(const ModelRegistry& registry) {
  return [&registry](const std::string& id) { return registry.find(id); };
}

}  // namespace

json generate_request_to_json(const GenerateRequest& r) {
  return {{"model_id", r.model_id},
          {"knowledge", r.knowledge},
          {"history", r.history},
          {"knob_config", knob_config_to_json(r.knobs)},
          {"gen_config", {{"top_p", r.gen.top_p}, {"temperature", r.gen.temperature}, {"max_len", r.gen.max_len}}},
          {"trace", r.trace},
          {"seed", r.seed}};
}

GenerateRequest generate_request_from_json(const json& j) {
  const std::string path = "request";
  require_object(j, path);
  reject_unknown_keys(j, path, {"model_id", "knowledge", "history", "knob_config", "gen_config", "trace", "seed"});
  GenerateRequest r;
  r.model_id = string_field(j, "model_id", path, true);
  if (r.model_id.empty()) throw ConfigError(path + ".model_id", "must not be empty");
  r.knowledge = string_field(j, "knowledge", path, false);
  r.history = history_field(j, path);
  if (j.contains("knob_config")) r.knobs = knob_config_from_json(j["knob_config"], path + ".knob_config");
  if (j.contains("gen_config")) r.gen = gen_config_from_json(j["gen_config"], path + ".gen_config");
  if (j.contains("trace")) {
    if (!j["trace"].is_boolean()) throw ConfigError(path + ".trace", "expected a boolean");
    r.trace = j["trace"].get<bool>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) {
      throw ConfigError(path + ".seed", "expected a non-negative integer");
    }
    r.seed = j["seed"].get<std::uint64_t>();
  }
  return r;
}

std::string serialize_generate_request(const GenerateRequest& r) { return generate_request_to_json(r).dump(); }

GenerateRequest parse_generate_request(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("request", std::string("malformed JSON: ") + e.what());
  }
  return generate_request_from_json(j);
}

json generate_response_to_json(const GenerateResponse& r) {
  json j = {{"text", r.text},
            {"tokens", r.tokens},
            {"stop_reason", r.stop_reason},
            {"metrics", {{"f1_k", r.metrics.f1_k}, {"rouge_l_k", r.metrics.rouge_l_k},
                         {"has_question", r.metrics.has_question}}}};
  if (r.trace) j["trace"] = *r.trace;
  return j;
}

GenerateResponse generate_response_from_json(const json& j) {
  GenerateResponse r;
  r.text = j.at("text").get<std::string>();
  r.tokens = j.at("tokens").get<std::vector<std::string>>();
  r.stop_reason = j.at("stop_reason").get<std::string>();
  const json& m = j.at("metrics");
  r.metrics.f1_k = m.at("f1_k").get<double>();
  r.metrics.rouge_l_k = m.at("rouge_l_k").get<double>();
  r.metrics.has_question = m.at("has_question").get<bool>();
  if (j.contains("trace")) r.trace = j["trace"];
  return r;
}

json trace_to_json(const Vocabulary& vocab, const SegmentedContext& context, const GenerationResult& result) {
  // Control-code rows precede the context and have no surface token.
  const std::size_t extra = result.memory_segments.size() - context.size();
  json tokens = json::array();
  for (std::size_t i = 0; i < result.memory_segments.size(); ++i) {
    tokens.push_back(i < extra ? std::string{} : vocab.token(context.token_ids[i - extra]));
  }
  json segments = json::array();
  for (const auto& s : result.memory_segments) segments.push_back(segment_json(s));
  json steps = json::array();
  for (std::size_t t = 0; t < result.traces.size(); ++t) {
    json layers = json::array();
    for (const auto& layer : result.traces[t].layers) {
      layers.push_back({{"self", attention_json(layer.self)},
                        {"cross", layer.cross ? attention_json(*layer.cross) : json(nullptr)}});
    }
    steps.push_back({{"token", vocab.token(result.tokens[t])}, {"layers", std::move(layers)}});
  }
  return {{"context", std::move(tokens)}, {"segments", std::move(segments)}, {"steps", std::move(steps)}};
}

void ModelRegistry::put(const std::string& id, std::shared_ptr<const Model> model) {
  if (id.empty()) throw std::invalid_argument("registry: empty model id");
  if (!model) throw std::invalid_argument("registry: null model for '" + id + "'");
  std::unique_lock lock(mutex_);
  models_[id] = std::move(model);
}

std::shared_ptr<const Model> ModelRegistry::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = models_.find(id);
  return it == models_.end() ? nullptr : it->second;
}

std::vector<std::string> ModelRegistry::ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, model] : models_) out.push_back(id);
  return out;
}

bool ModelRegistry::empty() const { return size() == 0; }

std::size_t ModelRegistry::size() const {
  std::shared_lock lock(mutex_);
  return models_.size();
}

HttpReply handle_health(const ModelRegistry& registry) {
  return {200, {{"status", "ok"}, {"models", registry.size()}}};
}

HttpReply handle_models(const ModelRegistry& registry) {
  json models = json::array();
  for (const auto& id : registry.ids()) {
    auto model = registry.find(id);
    if (!model) continue;
    models.push_back({{"id", id}, {"config", model->config}, {"vocab_size", model->vocab.size()}});
  }
  return {200, {{"models", std::move(models)}}};
}

GenerateResponse execute_generate(const Model& model, const GenerateRequest& request, const ModelLookup& lookup,
                                  const ServiceOptions& options) {
  const FormattedExample example =
      format_request_context(model.vocab, request.knowledge, request.history, options.buckets);
  const ActiveKnobs knobs = resolve_knobs(request.knobs, model, lookup);
  GenerationConfig gen = request.gen;
  gen.seed = request.seed;
  Rng rng(request.seed);
  const TraceOptions trace{request.trace, options.trace_steps};
  const GenerationResult result = generate(model, example.encoder_input, knobs, gen, rng, trace);

  GenerateResponse response;
  response.text = result.text;
  for (int id : result.tokens) response.tokens.push_back(model.vocab.token(id));
  response.stop_reason = to_string(result.stop_reason);
  response.metrics = {unigram_f1(result.text, request.knowledge), rouge_l(result.text, request.knowledge),
                      has_question(result.text)};
  if (request.trace) response.trace = trace_to_json(model.vocab, example.encoder_input, result);
  return response;
}

HttpReply handle_generate(const ModelRegistry& registry, const ServiceOptions& options, const std::string& body) {
  return guarded_reply([&]() -> HttpReply {
    const GenerateRequest request = generate_request_from_json(parse_body(body));
    auto model = registry.find(request.model_id);
    if (!model) return error_reply(404, "unknown model '" + request.model_id + "'", "request.model_id");

    const GenerateResponse response = execute_generate(*model, request, registry_lookup(registry), options);
    return {200, generate_response_to_json(response)};
  });
}

HttpReply handle_sweep(const ModelRegistry& registry, const ServiceOptions& options, const std::string& body) {
  return guarded_reply([&]() -> HttpReply {
    const std::string path = "sweep";
    const json j = parse_body(body);
    reject_unknown_keys(j, path, {"model_id", "contexts", "grid", "grid_spec", "gen_config", "seeds", "bootstrap"});
    const std::string model_id = string_field(j, "model_id", path, true);
    auto model = registry.find(model_id);
    if (!model) return error_reply(404, "unknown model '" + model_id + "'", path + ".model_id");

    if (!j.contains("contexts") || !j["contexts"].is_array() || j["contexts"].empty()) {
      throw ConfigError(path + ".contexts", "expected a non-empty array");
    }
    if (j["contexts"].size() > options.max_sweep_contexts) {
      throw ConfigError(path + ".contexts", "at most " + std::to_string(options.max_sweep_contexts) + " allowed");
    }
    std::vector<SweepContext> contexts;
    for (std::size_t i = 0; i < j["contexts"].size(); ++i) {
      const std::string cpath = path + ".contexts[" + std::to_string(i) + "]";
      const json& c = require_object(j["contexts"][i], cpath);
      reject_unknown_keys(c, cpath, {"knowledge", "history", "reference"});
      const std::string knowledge = string_field(c, "knowledge", cpath, false);
      const std::string reference = string_field(c, "reference", cpath, false);
      contexts.push_back({format_request_context(model->vocab, knowledge, history_field(c, cpath), options.buckets,
                                                 reference),
                          knowledge, reference});
    }

    std::vector<SweepCell> grid;
    if (j.contains("grid") == j.contains("grid_spec")) {
      throw ConfigError(path + ".grid", "give exactly one of grid or grid_spec");
    }
    if (j.contains("grid_spec")) {
      grid = parse_grid_spec(string_field(j, "grid_spec", path, true), KnobConfig{});
    } else {
      if (!j["grid"].is_array() || j["grid"].empty()) throw ConfigError(path + ".grid", "expected a non-empty array");
      for (std::size_t i = 0; i < j["grid"].size(); ++i) {
        const std::string gpath = path + ".grid[" + std::to_string(i) + "]";
        const json& g = require_object(j["grid"][i], gpath);
        reject_unknown_keys(g, gpath, {"label", "knob_config"});
        SweepCell cell;
        cell.label = string_field(g, "label", gpath, false);
        if (cell.label.empty()) cell.label = "cell" + std::to_string(i);
        if (g.contains("knob_config")) cell.knobs = knob_config_from_json(g["knob_config"], gpath + ".knob_config");
        grid.push_back(std::move(cell));
      }
    }
    if (grid.size() > options.max_sweep_cells) {
      throw ConfigError(path + ".grid", "at most " + std::to_string(options.max_sweep_cells) + " cells allowed");
    }

    const GenerationConfig gen = j.contains("gen_config") ? gen_config_from_json(j["gen_config"], path + ".gen_config")
                                                          : GenerationConfig{};
    SweepOptions sweep;
    sweep.n_seeds = static_cast<int>(integer_field(j, "seeds", path, 1));
    if (sweep.n_seeds < 1 || sweep.n_seeds > options.max_sweep_seeds) {
      throw ConfigError(path + ".seeds", "must lie in [1, " + std::to_string(options.max_sweep_seeds) + "]");
    }
    sweep.bootstrap_resamples = static_cast<int>(integer_field(j, "bootstrap", path, 1000));
    if (sweep.bootstrap_resamples < 1) throw ConfigError(path + ".bootstrap", "must be >= 1");

    const auto rows = knob_sweep(*model, registry_lookup(registry), contexts, grid, gen, sweep);
    json records = json::array();
    for (const auto& row : rows) records.push_back(report_to_json(row));
    return {200, {{"rows", std::move(records)}, {"table", format_report_table(rows)}}};
  });
}

BindAddress parse_bind_address(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("bind address '" + text + "' must be host:port");
  BindAddress out;
  if (colon > 0) out.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  std::size_t used = 0;
  int value = -1;
  try {
    value = std::stoi(port, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port.size() || port.empty() || value < 0 || value > 65535) {
    throw std::invalid_argument("bind address '" + text + "' has an invalid port");
  }
  out.port = value;
  return out;
}

BindAddress resolve_bind_address(const BindAddress& fallback) {
  const char* env = std::getenv("EDTK_BIND");
  if (env == nullptr || *env == '\0') return fallback;
  return parse_bind_address(env);
}

struct Server::Impl {
  std::shared_ptr<ModelRegistry> registry;
  ServiceOptions options;
  httplib::Server http;

  static void send(httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  }
};

Server::Server(std::shared_ptr<ModelRegistry> registry, ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  if (!registry || registry->empty()) throw std::invalid_argument("serve: no models loaded");
  impl_->registry = std::move(registry);
  impl_->options = options;
  Impl& impl = *impl_;
  impl.http.Get("/health", [&impl](const httplib::Request&, httplib::Response& res) {
    Impl::send(res, handle_health(*impl.registry));
  });
  impl.http.Get("/models", [&impl](const httplib::Request&, httplib::Response& res) {
    Impl::send(res, handle_models(*impl.registry));
  });
  impl.http.Post("/generate", [&impl](const httplib::Request& req, httplib::Response& res) {
    Impl::send(res, handle_generate(*impl.registry, impl.options, req.body));
  });
  impl.http.Post("/sweep", [&impl](const httplib::Request& req, httplib::Response& res) {
    Impl::send(res, handle_sweep(*impl.registry, impl.options, req.body));
  });
  impl.http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    Impl::send(res, error_reply(500, message));
  });
}

Server::~Server() { stop(); }

bool Server::listen(const BindAddress& address) { return impl_->http.listen(address.host, address.port); }

int Server::bind_ephemeral(const std::string& host) { return impl_->http.bind_to_any_port(host); }

bool Server::listen_after_bind() { return impl_->http.listen_after_bind(); }

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

void Server::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

}  // namespace edtk
