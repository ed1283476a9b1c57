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

// Local HTTP service: model registry, request/response wire types and the
// endpoint handlers. Handlers are plain functions of (registry, body) so they
// can be exercised without a socket.

#ifndef EDTK_SERVICE_HPP
#define EDTK_SERVICE_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "edtk/corpus.hpp"
#include "edtk/generation.hpp"
#include "edtk/knob_config.hpp"
#include "edtk/model.hpp"
#include "json.hpp"

namespace edtk {

struct GenerateRequest {
  std::string model_id;
  std::string knowledge;
  std::vector<std::string> history;
  KnobConfig knobs;
  /// Sampling parameters; the seed field is ignored in favour of `seed`.
  GenerationConfig gen;
  bool trace = false;
  std::uint64_t seed = 0;

  friend bool operator==(const GenerateRequest&, const GenerateRequest&) = default;
};

nlohmann::json generate_request_to_json(const GenerateRequest& r);
/// Strict: unknown keys and wrong types raise ConfigError with the field path.
GenerateRequest generate_request_from_json(const nlohmann::json& j);
std::string serialize_generate_request(const GenerateRequest& r);
GenerateRequest parse_generate_request(const std::string& text);

struct ResponseMetrics {
  double f1_k = 0.0;
  double rouge_l_k = 0.0;
  bool has_question = false;

  friend bool operator==(const ResponseMetrics&, const ResponseMetrics&) = default;
};

struct GenerateResponse {
  std::string text;
  std::vector<std::string> tokens;
  std::string stop_reason;
  ResponseMetrics metrics;
  /// Present iff the request asked for it.
  std::optional<nlohmann::json> trace;

  friend bool operator==(const GenerateResponse&, const GenerateResponse&) = default;
};

nlohmann::json generate_response_to_json(const GenerateResponse& r);
GenerateResponse generate_response_from_json(const nlohmann::json& j);

/// {"context": [...], "segments": [...], "steps": [{"token", "layers": [...]}]}
/// with one pre/post-bias attention matrix (heads x keys) per block.
nlohmann::json trace_to_json(const Vocabulary& vocab, const SegmentedContext& context,
                             const GenerationResult& result);

/// Thread-safe id -> model map. Readers get a shared_ptr snapshot, so a
/// replace never disturbs a request already holding the previous model.
class ModelRegistry {
 public:
  void put(const std::string& id, std::shared_ptr<const Model> model);
  std::shared_ptr<const Model> find(const std::string& id) const;
  std::vector<std::string> ids() const;
  bool empty() const;
  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const Model>> models_;
};

struct ServiceOptions {
  Buckets buckets;
  int trace_steps = 40;
  std::size_t max_sweep_contexts = 64;
  std::size_t max_sweep_cells = 8;
  int max_sweep_seeds = 5;
};

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

/// Formats the request context (short histories are left-padded with empty
/// turns, unknown words map to <unk>), resolves knobs and generates with an
/// Rng seeded from `request.seed`.
GenerateResponse execute_generate(const Model& model, const GenerateRequest& request, const ModelLookup& lookup,
                                  const ServiceOptions& options);

HttpReply handle_health(const ModelRegistry& registry);
HttpReply handle_models(const ModelRegistry& registry);
HttpReply handle_generate(const ModelRegistry& registry, const ServiceOptions& options, const std::string& body);
/// {"model_id", "contexts": [{"knowledge", "history", "reference"}], "grid": [{"label", "knob_config"}] or
/// "grid_spec": "bk=...", optional "gen_config", "seeds", "bootstrap"}.
HttpReply handle_sweep(const ModelRegistry& registry, const ServiceOptions& options, const std::string& body);

struct BindAddress {
  std::string host = "127.0.0.1";
  int port = 8765;
};

/// Parses "host:port" or ":port". Throws std::invalid_argument.
BindAddress parse_bind_address(const std::string& text);
/// EDTK_BIND overrides `fallback` when set.
BindAddress resolve_bind_address(const BindAddress& fallback);

class Server {
 public:
  /// Throws std::invalid_argument when the registry is empty.
  Server(std::shared_ptr<ModelRegistry> registry, ServiceOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and serves until stop(). Returns false when binding fails.
  bool listen(const BindAddress& address);
  /// Binds to an ephemeral port and returns it; serve with listen_after_bind().
  int bind_ephemeral(const std::string& host);
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace edtk

#endif  // EDTK_SERVICE_HPP
