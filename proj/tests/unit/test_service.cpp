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

#include <future>
#include <thread>

#include "doctest.h"
#include "edtk/metrics.hpp"
#include "edtk/service.hpp"
#include "httplib.h"
#include "service_support.hpp"

using namespace edtk;
using nlohmann::json;
using edtk::testing::random_request;

namespace {

std::shared_ptr<ModelRegistry> registry() {
  auto r = std::make_shared<ModelRegistry>();
  edtk::testing::TinySpec spec;
  spec.max_positions = 64;
  r->put("base", std::make_shared<const Model>(edtk::testing::tiny_model(1, spec)));
  r->put("other", std::make_shared<const Model>(edtk::testing::tiny_model(2, spec)));
  return r;
}

std::string body(const json& j) { return j.dump(); }

json basic_request(std::uint64_t seed = 7) {
  return {{"model_id", "base"},
          {"knowledge", "w1 w2 w3"},
          {"history", {"w4 w5", "w6"}},
          {"gen_config", {{"top_p", 0.9}, {"temperature", 0.7}, {"max_len", 12}}},
          {"seed", seed}};
}

}  // namespace

TEST_CASE("generate requests survive serialization") {
  Rng rng(123);
  for (int i = 0; i < 1000; ++i) {
    const GenerateRequest r = random_request(rng);
    const std::string text = serialize_generate_request(r);
    CHECK(parse_generate_request(text) == r);
  }
}

TEST_CASE("malformed requests are rejected with the field") {
  const std::pair<json, const char*> cases[] = {
      {json{{"knowledge", "x"}}, "request.model_id"},
      {json{{"model_id", "base"}, {"extra", 1}}, "request.extra"},
      {json{{"model_id", "base"}, {"history", "not a list"}}, "request.history"},
      {json{{"model_id", "base"}, {"seed", -1}}, "request.seed"},
      {json{{"model_id", "base"}, {"trace", "yes"}}, "request.trace"},
      {json{{"model_id", "base"}, {"gen_config", {{"top_p", 0}}}}, "request.gen_config.top_p"},
      {json{{"model_id", "base"}, {"knob_config", {{"bias_profile", {{"kind", "loud"}}}}}},
       "request.knob_config.bias_profile.kind"},
  };
  const auto reg = registry();
  for (const auto& [request, field] : cases) {
    CAPTURE(request.dump());
    const HttpReply reply = handle_generate(*reg, {}, request.dump());
    CHECK(reply.status == 400);
    CHECK(reply.body.at("field") == field);
  }
  CHECK(handle_generate(*reg, {}, "{not json").status == 400);

  json too_long = basic_request();
  too_long["history"] = {"a", "b", "c", "d", "e", "f"};
  const HttpReply h = handle_generate(*reg, {}, body(too_long));
  CHECK(h.status == 400);

  json unknown = basic_request();
  unknown["model_id"] = "nobody";
  CHECK(handle_generate(*reg, {}, body(unknown)).status == 404);

  json bad_mix = basic_request();
  bad_mix["knob_config"] = {{"mix", {{"models", {"base", "ghost"}}, {"alpha", {0.5, 0.5}}}}};
  const HttpReply m = handle_generate(*reg, {}, body(bad_mix));
  CHECK(m.status == 400);
  CHECK(m.body.at("field") == "knobs.mix.models[1]");
}

TEST_CASE("generate is reproducible and all-ones biasing is invisible") {
  const auto reg = registry();
  const HttpReply a = handle_generate(*reg, {}, body(basic_request(11)));
  const HttpReply b = handle_generate(*reg, {}, body(basic_request(11)));
  REQUIRE(a.status == 200);
  CHECK(a.body.dump() == b.body.dump());

  json ones = basic_request(11);
  ones["knob_config"] = {{"bias_profile", {{"kind", "knowledge"}, {"knowledge", 1}, {"history", 1}}}};
  CHECK(handle_generate(*reg, {}, body(ones)).body.at("text") == a.body.at("text"));

  const GenerateResponse parsed = generate_response_from_json(a.body);
  CHECK(generate_response_to_json(parsed) == a.body);
  CHECK_FALSE(parsed.trace.has_value());
  CHECK(parsed.metrics.f1_k == unigram_f1(parsed.text, "w1 w2 w3"));
  const bool eos = parsed.stop_reason == "eos";
  CHECK(eos == (!parsed.tokens.empty() && parsed.tokens.back() == "</s>"));
}

TEST_CASE("traces label segments and hold distributions") {
  const auto reg = registry();
  json request = basic_request(3);
  request["trace"] = true;
  request["knob_config"] = {{"bias_profile", {{"kind", "knowledge"}}}};
  const HttpReply reply = handle_generate(*reg, {}, body(request));
  REQUIRE(reply.status == 200);
  const json& trace = reply.body.at("trace");
  const Buckets desk = Buckets::desk();
  CHECK(trace.at("context").size() == static_cast<std::size_t>(desk.context_length()));
  CHECK(trace.at("segments").size() == trace.at("context").size());
  CHECK(trace.at("segments")[0].at("kind") == "knowledge");
  CHECK(trace.at("steps").size() == reply.body.at("tokens").size());
  for (const auto& step : trace.at("steps")) {
    for (const auto& layer : step.at("layers")) {
      for (const auto& row : layer.at("cross").at("post_bias")) {
        double s = 0.0;
        for (double v : row) s += v;
        CHECK(std::fabs(s - 1.0) <= 1e-9);
      }
    }
  }
}

TEST_CASE("models, health and sweep handlers") {
  const auto reg = registry();
  const HttpReply models = handle_models(*reg);
  CHECK(models.status == 200);
  REQUIRE(models.body.at("models").size() == 2);
  CHECK(models.body.at("models")[0].at("id") == "base");
  CHECK(models.body.at("models")[0].at("config").at("d_model") == 8);
  CHECK(handle_health(*reg).body.at("status") == "ok");

  const json sweep = {{"model_id", "base"},
                      {"contexts", {{{"knowledge", "w1 w2"}, {"history", {"w3"}}, {"reference", "w1"}},
                                    {{"knowledge", "w4"}, {"history", json::array()}, {"reference", "w4 w5"}}}},
                      {"grid_spec", "bk=1,5"},
                      {"gen_config", {{"max_len", 8}}},
                      {"bootstrap", 50}};
  const HttpReply s = handle_sweep(*reg, {}, body(sweep));
  REQUIRE(s.status == 200);
  CHECK(s.body.at("rows").size() == 2);
  CHECK(s.body.at("table").get<std::string>().find("bk=5") != std::string::npos);

  json greedy = sweep;
  greedy["seeds"] = 50;
  CHECK(handle_sweep(*reg, {}, body(greedy)).status == 400);
  json bad = sweep;
  bad["grid_spec"] = "volume=3";
  CHECK(handle_sweep(*reg, {}, body(bad)).status == 400);
}

TEST_CASE("bind addresses") {
  CHECK(parse_bind_address("0.0.0.0:9000").host == "0.0.0.0");
  CHECK(parse_bind_address(":9001").port == 9001);
  CHECK(parse_bind_address(":9001").host == "127.0.0.1");
  CHECK_THROWS(parse_bind_address("host:"));
  CHECK_THROWS(parse_bind_address("host:70000"));
  CHECK_THROWS(parse_bind_address("host:12x"));
}

TEST_CASE("an empty registry refuses to serve") {
  CHECK_THROWS_AS(Server(std::make_shared<ModelRegistry>(), ServiceOptions{}), std::invalid_argument);
}

TEST_CASE("live server answers over HTTP, concurrently and deterministically") {
  Server server(registry(), ServiceOptions{});
  const int port = server.bind_ephemeral("127.0.0.1");
  REQUIRE(port > 0);
  std::thread loop([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  const auto models = client.Get("/models");
  REQUIRE(models);
  CHECK(models->status == 200);
  CHECK(json::parse(models->body).at("models").size() == 2);

  const auto missing = client.Post("/generate", R"({"model_id":"ghost"})", "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  const auto broken = client.Post("/generate", "{", "application/json");
  REQUIRE(broken);
  CHECK(broken->status == 400);

  std::vector<std::string> serial;
  for (int i = 0; i < 8; ++i) {
    const auto r = client.Post("/generate", body(basic_request(100 + i)), "application/json");
    REQUIRE(r);
    CHECK(r->status == 200);
    serial.push_back(r->body);
  }
  std::vector<std::future<std::string>> jobs;
  for (int i = 0; i < 8; ++i) {
    jobs.push_back(std::async(std::launch::async, [port, i] {
      httplib::Client c("127.0.0.1", port);
      const auto r = c.Post("/generate", body(basic_request(100 + i)), "application/json");
      return r ? r->body : std::string();
    }));
  }
  for (int i = 0; i < 8; ++i) CHECK(jobs[static_cast<std::size_t>(i)].get() == serial[static_cast<std::size_t>(i)]);

  server.stop();
  loop.join();
}
