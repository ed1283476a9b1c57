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

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "edtk/checkpoint.hpp"
#include "edtk/cli.hpp"
#include "edtk/service.hpp"
#include "support.hpp"

using namespace edtk;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "edtk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("edtk_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

Model desk_tiny(std::uint64_t seed) {
  edtk::testing::TinySpec spec;
  spec.max_positions = 64;
  return edtk::testing::tiny_model(seed, spec);
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("usage errors exit with 2") {
  const Run none = cli({});
  CHECK(none.code == kExitUsage);
  CHECK(none.err.find("error:") != std::string::npos);
  CHECK(cli({"generate", "--model", "/nonexistent/model.edtk"}).code == kExitUsage);
  CHECK(cli({"corpus", "--bogus"}).code == kExitUsage);
  CHECK(cli({"dance"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("generate with the knowledge flags matches the library") {
  Scratch s;
  const Model m = desk_tiny(3);
  save_checkpoint(m, s.path("m.edtk"));
  Model rounded = m;
  round_to_float32(rounded.params);

  const std::vector<std::string> base = {"generate", "--model", s.path("m.edtk"), "--knowledge", "w1 w2 w3",
                                         "--history", "w4 w5", "w6", "--seed", "9", "--max-len", "12", "--json"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  const Run knowledge = with({"--bias", "knowledge", "--bk", "5", "--bh", "1"});
  REQUIRE(knowledge.code == kExitOk);

  GenerateRequest req;
  req.model_id = "main";
  req.knowledge = "w1 w2 w3";
  req.history = {"w4 w5", "w6"};
  req.knobs.bias_profile = BiasProfile::knowledge(5.0, 1.0);
  req.gen.max_len = 12;
  req.seed = 9;
  const GenerateResponse direct = execute_generate(rounded, req, {}, ServiceOptions{});
  CHECK(nlohmann::json::parse(knowledge.out) == generate_response_to_json(direct));

  CHECK(with({"--bias", "knowledge"}).out == knowledge.out);
  CHECK(with({"--bk", "5", "--bh", "1"}).out == knowledge.out);
  CHECK(with({"--bias", "knowledge", "--bk", "1", "--bh", "1"}).out == with({}).out);
  CHECK(with({"--bias", "knowledge", "--bk", "-2"}).code != kExitOk);

  const Run traced = with({"--trace", "--trace-steps", "3"});
  REQUIRE(traced.code == kExitOk);
  CHECK(nlohmann::json::parse(traced.out).at("trace").at("steps").size() <= 3);
}

TEST_CASE("sweep, swap and frob-diff") {
  Scratch s;
  save_checkpoint(desk_tiny(4), s.path("a.edtk"));
  save_checkpoint(desk_tiny(5), s.path("b.edtk"));
  {
    std::ofstream f(s.path("ctx.jsonl"));
    f << R"({"knowledge":"w1 w2 w3","turns":["w4","w5 w6","","w7","w8"],"response":"w1 w2"})" << "\n";
    f << R"({"knowledge":"w9 w10","turns":["w11","","","","w12"],"response":"w9"})" << "\n";
  }
  const Run sweep = cli({"sweep", "--model", s.path("a.edtk"), "--contexts", s.path("ctx.jsonl"), "--grid",
                         "bk=1,2,5,10,50", "--seeds", "2", "--bootstrap", "50", "--max-len", "8", "--jsonl",
                         s.path("rows.jsonl")});
  REQUIRE(sweep.code == kExitOk);
  CHECK(lines(sweep.out) == 6);
  std::ifstream rows(s.path("rows.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(rows, line)) ++n;
  CHECK(n == 5);
  CHECK(cli({"sweep", "--model", s.path("a.edtk"), "--contexts", s.path("ctx.jsonl")}).code == kExitUsage);

  REQUIRE(cli({"swap-selfattn", "--target", s.path("a.edtk"), "--donor", s.path("b.edtk"), "--out",
               s.path("h.edtk")})
              .code == kExitOk);
  const Model a = load_checkpoint(s.path("a.edtk")), b = load_checkpoint(s.path("b.edtk")),
              h = load_checkpoint(s.path("h.edtk"));
  CHECK(h.params.decoder[0].self_attn.w_q == b.params.decoder[0].self_attn.w_q);
  CHECK(h.params.decoder[0].ffn.w1 == a.params.decoder[0].ffn.w1);

  const Run frob = cli({"frob-diff", s.path("h.edtk"), s.path("b.edtk")});
  REQUIRE(frob.code == kExitOk);
  CHECK(frob.out.find("w_q avg_diff_norm 0 ") != std::string::npos);
  CHECK(lines(cli({"frob-diff", s.path("a.edtk"), s.path("b.edtk"), "--projection", "w_k"}).out) == 1);
}

TEST_CASE("corpus and a one-epoch training run") {
  Scratch s;
  const Run corpus = cli({"corpus", "--out", s.path("corpus"), "--dialogs", "30", "--seed", "2"});
  REQUIRE(corpus.code == kExitOk);
  for (const char* split : {"train", "valid", "test", "rare"}) CHECK(fs::exists(s.dir / "corpus" / (std::string(split) + ".jsonl")));

  const Run train = cli({"train", "--corpus", s.path("corpus"), "--out", s.path("m.edtk"), "--epochs", "1", "--quiet"});
  REQUIRE(train.code == kExitOk);
  nlohmann::json meta;
  const Model m = load_checkpoint(s.path("m.edtk"), &meta);
  CHECK(m.config.d_model == 64);
  CHECK(meta.at("task") == "response");
  CHECK(meta.at("buckets").at("knowledge") == 12);
  CHECK(meta.at("history").size() == 1);

  const Run ppl = cli({"perplexity", "--model", s.path("m.edtk"), "--corpus", s.path("corpus")});
  REQUIRE(ppl.code == kExitOk);
  CHECK(ppl.out.starts_with("ppl "));
  CHECK(cli({"train", "--corpus", s.path("corpus"), "--out", s.path("x.edtk"), "--task", "poetry"}).code == kExitUsage);
}
