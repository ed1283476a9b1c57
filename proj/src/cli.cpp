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

#include "edtk/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "edtk/checkpoint.hpp"
#include "edtk/corpus.hpp"
#include "edtk/generation.hpp"
#include "edtk/knob_config.hpp"
#include "edtk/service.hpp"
#include "edtk/sweep.hpp"
#include "edtk/training.hpp"

namespace edtk {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const char* const kSplits[] = {"train", "valid", "test", "rare"};

struct CorpusFiles {
  std::map<std::string, std::vector<Dialog>> splits;
  Vocabulary vocab;

  const std::vector<Dialog>& split(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw std::invalid_argument("unknown split '" + name + "'");
    return it->second;
  }
};

CorpusFiles load_corpus_dir(const fs::path& dir) {
  CorpusFiles c;
  std::vector<const std::vector<Dialog>*> all;
  for (const char* name : kSplits) {
    const fs::path file = dir / (std::string(name) + ".jsonl");
    if (!fs::exists(file)) throw std::runtime_error("corpus file " + file.string() + " not found");
    c.splits[name] = read_jsonl(file);
  }
  for (const auto& [name, dialogs] : c.splits) all.push_back(&dialogs);
  c.vocab = build_vocabulary(all);
  return c;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Buckets buckets_from_metadata(const json& meta) {
  Buckets b;
  if (meta.contains("buckets")) {
    const json& j = meta["buckets"];
    b.knowledge = j.at("knowledge").get<int>();
    b.turn = j.at("turn").get<int>();
    b.turns = j.at("turns").get<int>();
  }
  return b;
}

json buckets_to_json(const Buckets& b) { return {{"knowledge", b.knowledge}, {"turn", b.turn}, {"turns", b.turns}}; }

Buckets buckets_from_name(const std::string& name) {
  if (name == "desk") return Buckets::desk();
  if (name == "full") return Buckets::full();
  throw std::invalid_argument("buckets must be desk or full");
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const int v = std::stoi(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad integer '" + item + "' in list '" + text + "'");
    out.push_back(v);
  }
  return out;
}

struct LoadedModel {
  std::shared_ptr<const Model> model;
  json metadata;
};

LoadedModel load_model(const std::string& path) {
  LoadedModel m;
  m.model = std::make_shared<const Model>(load_checkpoint(path, &m.metadata));
  return m;
}

// "id=path" or a bare path, whose stem becomes the id.
std::pair<std::string, std::string> split_model_spec(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) return {fs::path(spec).stem().string(), spec};
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

std::vector<SweepContext> sweep_contexts(const Vocabulary& vocab, const std::vector<Dialog>& dialogs,
                                         const Buckets& buckets, std::size_t limit) {
  std::vector<SweepContext> out;
  for (std::size_t i = 0; i < dialogs.size() && i < limit; ++i) {
    const Dialog& d = dialogs[i];
    out.push_back({format_example(vocab, d.knowledge, d.turns, d.response, buckets, true), d.knowledge, d.response});
  }
  return out;
}

std::vector<Dialog> dialogs_from(const std::string& corpus_dir, const std::string& split,
                                 const std::string& contexts_file) {
  if (!contexts_file.empty()) return read_jsonl(contexts_file);
  return load_corpus_dir(corpus_dir).split(split);
}

// Knob flags shared by generate, sweep and perplexity.
struct KnobFlags {
  std::string knobs_file;
  std::string bias;
  std::optional<double> bk, bh, cap, slope, h_const, value;
  std::optional<int> horizon;
  std::string bias_layers;
  std::optional<int> recency;
  std::string control_file;
  bool questions = false;
  int control_length = kDefaultControlLength;

  void add_to(CLI::App* app) {
    app->add_option("--knobs", knobs_file, "Knob configuration JSON")->check(CLI::ExistingFile);
    app->add_option("--bias", bias, "Cross-attention bias profile")
        ->check(CLI::IsMember({"none", "dialog", "knowledge", "gradual_knowledge", "control_horizon"}));
    app->add_option("--bk", bk, "Knowledge bias value");
    app->add_option("--bh", bh, "History bias value");
    app->add_option("--cap", cap, "Gradual knowledge cap");
    app->add_option("--slope", slope, "Gradual knowledge slope");
    app->add_option("--h-const", h_const, "Gradual knowledge history value");
    app->add_option("--value", value, "Control-code bias value");
    app->add_option("--horizon", horizon, "Control-code bias horizon");
    app->add_option("--bias-layers", bias_layers, "Comma-separated decoder layers to bias");
    app->add_option("--recency", recency, "Recency self-attention bias window");
    app->add_option("--control-phrases", control_file, "File with one control phrase per line")
        ->check(CLI::ExistingFile);
    app->add_flag("--questions", questions, "Use the built-in question phrases as control code");
    app->add_option("--control-length", control_length, "Control code length");
  }

  KnobConfig resolve() const {
    KnobConfig k = knobs_file.empty() ? KnobConfig{} : parse_knob_config(read_text_file(knobs_file));
    std::string kind = bias;
    if (kind.empty() && (bk || bh)) kind = "knowledge";
    if (kind == "none") {
      k.bias_profile = BiasProfile::none();
    } else if (kind == "dialog") {
      k.bias_profile = BiasProfile::dialog(bk.value_or(1.0), bh.value_or(5.0));
    } else if (kind == "knowledge") {
      k.bias_profile = BiasProfile::knowledge(bk.value_or(5.0), bh.value_or(1.0));
    } else if (kind == "gradual_knowledge") {
      k.bias_profile = BiasProfile::gradual_knowledge(cap.value_or(5.0), slope.value_or(0.5), h_const.value_or(1.0));
    } else if (kind == "control_horizon") {
      k.bias_profile = BiasProfile::control_horizon(value.value_or(5.0), horizon.value_or(6));
    }
    k.bias_profile.validate();
    if (!bias_layers.empty()) k.bias_layers = parse_int_list(bias_layers);
    if (recency) k.self_bias_profile = SelfBiasProfile::recency(*recency);
    k.self_bias_profile.validate();
    std::vector<std::string> phrases;
    if (questions) phrases = question_phrases();
    if (!control_file.empty()) {
      std::istringstream in(read_text_file(control_file));
      for (std::string line; std::getline(in, line);) {
        if (!line.empty()) phrases.push_back(line);
      }
    }
    if (!phrases.empty()) k.control_code = ControlCodeConfig{phrases, control_length};
    return k;
  }
};

struct SamplingFlags {
  GenerationConfig gen;

  void add_to(CLI::App* app) {
    app->add_option("--top-p", gen.top_p, "Nucleus mass")->check(CLI::Range(1e-9, 1.0));
    app->add_option("--temperature", gen.temperature, "Sampling temperature")->check(CLI::PositiveNumber);
    app->add_option("--max-len", gen.max_len, "Maximum generated tokens")->check(CLI::PositiveNumber);
    app->add_option("--seed", gen.seed, "Sampling seed");
  }
};

struct MixModels {
  std::vector<std::string> specs;
  std::map<std::string, std::shared_ptr<const Model>> models;

  void add_to(CLI::App* app) {
    app->add_option("--mix-model", specs, "Extra decoder for mixing, as id=checkpoint");
  }
  void load() {
    for (const auto& spec : specs) {
      auto [id, path] = split_model_spec(spec);
      models[id] = load_model(path).model;
    }
  }
  ModelLookup lookup() const {
    return [this](const std::string& id) -> std::shared_ptr<const Model> {
      auto it = models.find(id);
      return it == models.end() ? nullptr : it->second;
    };
  }
};

int cmd_corpus(const std::string& out_dir, int dialogs, std::uint64_t seed, std::ostream& out) {
  CorpusSpec spec;
  spec.n_dialogs = dialogs;
  spec.seed = seed;
  const Corpus c = generate_corpus(spec);
  fs::create_directories(out_dir);
  const std::pair<const char*, const std::vector<Dialog>*> splits[] = {
      {"train", &c.train}, {"valid", &c.valid}, {"test", &c.test}, {"rare", &c.rare}};
  for (const auto& [name, dialogs_ptr] : splits) {
    write_jsonl(*dialogs_ptr, fs::path(out_dir) / (std::string(name) + ".jsonl"));
  }
  out << "wrote " << c.train.size() << "/" << c.valid.size() << "/" << c.test.size() << "/" << c.rare.size()
      << " dialogs to " << out_dir << " (vocab " << c.vocab.size() << ")\n";
  return kExitOk;
}

struct TrainArgs {
  std::string corpus, out, config, task = "response", init, freeze, variant, cross_layers, buckets = "desk";
  bool random_self_attn = false;
  std::optional<int> epochs;
  std::optional<double> lr, max_seconds;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const CorpusFiles corpus = load_corpus_dir(a.corpus);
  TrainConfig tc;
  if (!a.config.empty()) tc = read_json_file(a.config).get<TrainConfig>();
  if (a.epochs) tc.max_epochs = *a.epochs;
  if (a.lr) tc.lr = *a.lr;
  if (a.seed) tc.seed = *a.seed;
  if (a.max_seconds) tc.max_seconds = *a.max_seconds;
  if (!a.freeze.empty()) tc.freeze.kind = freeze_kind_from_string(a.freeze);
  if (a.random_self_attn) tc.freeze.dec_self_attn_init = SelfAttentionInit::random;
  tc.validate();

  Model model;
  Buckets buckets = buckets_from_name(a.buckets);
  if (!a.init.empty()) {
    json meta;
    model = load_checkpoint(a.init, &meta);
    buckets = buckets_from_metadata(meta);
    if (!a.variant.empty() && decoder_variant_from_string(a.variant) != model.config.decoder_variant) {
      throw std::invalid_argument("--variant differs from the initial checkpoint");
    }
    if (!a.cross_layers.empty()) model = restrict_cross_attention(model, parse_int_list(a.cross_layers));
  } else {
    ModelConfig cfg = ModelConfig::desk_scale(corpus.vocab.size());
    cfg.max_positions = std::max(cfg.max_positions, buckets.context_length());
    if (!a.variant.empty()) cfg.decoder_variant = decoder_variant_from_string(a.variant);
    if (!a.cross_layers.empty()) cfg.cross_attn_layers = parse_int_list(a.cross_layers);
    cfg.validate();
    Rng rng(tc.seed);
    model = Model{cfg, init_parameters(cfg, rng), corpus.vocab};
  }

  auto examples = [&](const std::vector<Dialog>& d) {
    if (a.task == "response") return format_all(model.vocab, d, buckets);
    if (a.task == "copy") return format_copy_task(model.vocab, d, buckets, tc.seed);
    return format_response_lm(model.vocab, d, buckets);
  };
  const auto train_set = examples(corpus.split("train"));
  const auto valid_set = examples(corpus.split("valid"));
  const TrainResult result = train(model, train_set, valid_set, tc, [&](const EpochReport& e) {
    if (!a.quiet) out << "epoch " << e.epoch << " train_loss " << e.train_loss << " valid_ppl " << e.valid_ppl
                      << " seconds " << e.seconds << "\n" << std::flush;
  });
  model.params = result.best;

  json history = json::array();
  for (const auto& e : result.history) {
    history.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_ppl", e.valid_ppl},
                       {"seconds", e.seconds}});
  }
  const json meta = {{"task", a.task},
                     {"buckets", buckets_to_json(buckets)},
                     {"train_config", tc},
                     {"best_epoch", result.best_epoch},
                     {"stop_reason", result.stop_reason},
                     {"history", history}};
  save_checkpoint(model, a.out, meta);
  const double best = result.history.empty() ? 0.0 : result.history[static_cast<std::size_t>(result.best_epoch - 1)].valid_ppl;
  out << "saved " << a.out << " best_epoch " << result.best_epoch << " valid_ppl " << best << " stop "
      << result.stop_reason << "\n";
  return kExitOk;
}

struct GenerateArgs {
  std::string model, knowledge, context;
  std::vector<std::string> history;
  bool trace = false, as_json = false;
  int trace_steps = 40;
};

int cmd_generate(const GenerateArgs& a, const KnobFlags& knobs, const SamplingFlags& sampling, MixModels& mix,
                 std::ostream& out) {
  const LoadedModel loaded = load_model(a.model);
  mix.load();
  GenerateRequest req;
  req.model_id = "main";
  req.knowledge = a.knowledge;
  req.history = a.history;
  if (!a.context.empty()) {
    const json c = read_json_file(a.context);
    req.knowledge = c.value("knowledge", std::string{});
    req.history = c.value("history", std::vector<std::string>{});
  }
  req.knobs = knobs.resolve();
  req.gen = sampling.gen;
  req.gen.seed = 0;
  req.seed = sampling.gen.seed;
  req.trace = a.trace;
  ServiceOptions options;
  options.buckets = buckets_from_metadata(loaded.metadata);
  options.trace_steps = a.trace_steps;
  const GenerateResponse resp = execute_generate(*loaded.model, req, mix.lookup(), options);
  if (a.as_json || a.trace) {
    out << generate_response_to_json(resp).dump() << "\n";
  } else {
    out << resp.text << "\n";
  }
  return kExitOk;
}

struct SweepArgs {
  std::string model, corpus, split = "test", contexts, grid, grid_file, jsonl;
  std::size_t limit = 200;
  int seeds = 5, bootstrap = 10000;
  bool no_ppl = false;
};

std::vector<SweepCell> load_grid_file(const std::string& path) {
  const json j = read_json_file(path);
  const json& cells = j.is_object() ? j.at("cells") : j;
  if (!cells.is_array() || cells.empty()) throw std::invalid_argument("grid file must hold a non-empty array of cells");
  std::vector<SweepCell> grid;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string path_i = "grid[" + std::to_string(i) + "]";
    SweepCell cell;
    cell.label = cells[i].value("label", "cell" + std::to_string(i));
    if (cells[i].contains("knob_config")) cell.knobs = knob_config_from_json(cells[i]["knob_config"], path_i);
    grid.push_back(std::move(cell));
  }
  return grid;
}

int cmd_sweep(const SweepArgs& a, const KnobFlags& knobs, const SamplingFlags& sampling, MixModels& mix,
              std::ostream& out) {
  const LoadedModel loaded = load_model(a.model);
  mix.load();
  const Buckets buckets = buckets_from_metadata(loaded.metadata);
  const auto contexts =
      sweep_contexts(loaded.model->vocab, dialogs_from(a.corpus, a.split, a.contexts), buckets, a.limit);
  const std::vector<SweepCell> grid = a.grid.empty() ? load_grid_file(a.grid_file)
                                                     : parse_grid_spec(a.grid, knobs.resolve());
  SweepOptions options;
  options.n_seeds = a.seeds;
  options.bootstrap_resamples = a.bootstrap;
  options.compute_ppl = !a.no_ppl;
  const auto rows = knob_sweep(*loaded.model, mix.lookup(), contexts, grid, sampling.gen, options);
  out << format_report_table(rows);
  if (!a.jsonl.empty()) {
    std::ofstream f(a.jsonl);
    if (!f) throw std::runtime_error("cannot write " + a.jsonl);
    for (const auto& row : rows) f << report_to_json(row).dump() << "\n";
  }
  return kExitOk;
}

int cmd_perplexity(const std::string& model_path, const std::string& corpus, const std::string& split,
                   const std::string& contexts, std::string task, const KnobFlags& knobs, MixModels& mix,
                   std::ostream& out) {
  const LoadedModel loaded = load_model(model_path);
  mix.load();
  const Buckets buckets = buckets_from_metadata(loaded.metadata);
  if (task.empty()) task = loaded.metadata.value("task", std::string("response"));
  const auto dialogs = dialogs_from(corpus, split, contexts);
  std::vector<FormattedExample> examples;
  if (task == "response") {
    examples = format_all(loaded.model->vocab, dialogs, buckets);
  } else if (task == "copy") {
    examples = format_copy_task(loaded.model->vocab, dialogs, buckets, 1);
  } else {
    examples = format_response_lm(loaded.model->vocab, dialogs, buckets);
  }
  const ActiveKnobs active = resolve_knobs(knobs.resolve(), *loaded.model, mix.lookup());
  out << "ppl " << perplexity(*loaded.model, examples, active) << " examples " << examples.size() << "\n";
  return kExitOk;
}

int cmd_swap(const std::string& target, const std::string& donor, const std::string& out_path, std::ostream& out) {
  json meta;
  Model t = load_checkpoint(target, &meta);
  const Model d = load_checkpoint(donor);
  if (!(t.config == d.config)) throw std::invalid_argument("swap-selfattn: checkpoints have different configs");
  swap_decoder_self_attention(t.params, d.params);
  meta["self_attention_from"] = donor;
  save_checkpoint(t, out_path, meta);
  out << "saved " << out_path << "\n";
  return kExitOk;
}

int cmd_frob(const std::string& a_path, const std::string& b_path, const std::string& projection,
             std::ostream& out) {
  const Model a = load_checkpoint(a_path);
  const Model b = load_checkpoint(b_path);
  if (!(a.config == b.config)) throw std::invalid_argument("frob-diff: checkpoints have different configs");
  const std::pair<const char*, ProjectionSelector> all[] = {
      {"w_q", ProjectionSelector::w_q}, {"w_k", ProjectionSelector::w_k}, {"w_v", ProjectionSelector::w_v}};
  for (const auto& [name, sel] : all) {
    if (projection != "all" && projection != name) continue;
    const FrobeniusReport r = frobenius_diff(a.params, b.params, sel);
    out << name << " avg_diff_norm " << r.avg_diff_norm << " avg_norm " << r.avg_norm << " ratio "
        << (r.avg_norm > 0 ? r.avg_diff_norm / r.avg_norm : 0.0) << "\n";
  }
  return kExitOk;
}

int cmd_serve(const std::vector<std::string>& specs, const std::string& bind, int trace_steps, std::ostream& out) {
  auto registry = std::make_shared<ModelRegistry>();
  ServiceOptions options;
  options.trace_steps = trace_steps;
  bool first = true;
  for (const auto& spec : specs) {
    auto [id, path] = split_model_spec(spec);
    LoadedModel m = load_model(path);
    if (first) options.buckets = buckets_from_metadata(m.metadata);
    first = false;
    registry->put(id, m.model);
  }
  Server server(registry, options);
  const BindAddress address = bind.empty() ? resolve_bind_address(BindAddress{}) : parse_bind_address(bind);
  out << "serving " << registry->size() << " model(s) on " << address.host << ":" << address.port << "\n"
      << std::flush;
  if (!server.listen(address)) throw std::runtime_error("cannot bind " + address.host + ":" + std::to_string(address.port));
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-grounded response generation with inference-time control knobs", "edtk"};
  app.require_subcommand(1);

  std::string corpus_out;
  int corpus_dialogs = 5000;
  std::uint64_t corpus_seed = 1;
  auto* corpus = app.add_subcommand("corpus", "Generate the synthetic dialog corpus");
  corpus->add_option("--out", corpus_out, "Output directory")->required();
  corpus->add_option("--dialogs", corpus_dialogs, "Number of dialogs")->check(CLI::PositiveNumber);
  corpus->add_option("--seed", corpus_seed, "Generator seed");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a corpus directory");
  train_cmd->add_option("--corpus", ta.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", ta.out, "Output checkpoint")->required();
  train_cmd->add_option("--config", ta.config, "Training configuration JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--task", ta.task, "Training task")->check(CLI::IsMember({"response", "copy", "lm"}));
  train_cmd->add_option("--init", ta.init, "Initial checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--freeze", ta.freeze, "Freeze scheme")
      ->check(CLI::IsMember({"none", "decoder_except_cross_attention"}));
  train_cmd->add_flag("--random-self-attn", ta.random_self_attn, "Re-initialize decoder self-attention");
  train_cmd->add_option("--variant", ta.variant, "Decoder variant")->check(CLI::IsMember({"sequential", "parallel"}));
  train_cmd->add_option("--cross-layers", ta.cross_layers, "Comma-separated decoder layers with cross-attention");
  train_cmd->add_option("--buckets", ta.buckets, "Context layout")->check(CLI::IsMember({"desk", "full"}));
  train_cmd->add_option("--epochs", ta.epochs, "Maximum epochs");
  train_cmd->add_option("--lr", ta.lr, "Learning rate");
  train_cmd->add_option("--seed", ta.seed, "Initialization and shuffling seed");
  train_cmd->add_option("--max-seconds", ta.max_seconds, "Wall-clock budget");
  train_cmd->add_flag("--quiet", ta.quiet, "Suppress per-epoch lines");

  GenerateArgs ga;
  KnobFlags gen_knobs;
  SamplingFlags gen_sampling;
  MixModels gen_mix;
  auto* generate_cmd = app.add_subcommand("generate", "Generate one response");
  generate_cmd->add_option("--model", ga.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  generate_cmd->add_option("--knowledge", ga.knowledge, "Knowledge snippet");
  generate_cmd->add_option("--history", ga.history, "History turns, oldest first");
  generate_cmd->add_option("--context", ga.context, "JSON file with knowledge and history")
      ->check(CLI::ExistingFile);
  generate_cmd->add_flag("--trace", ga.trace, "Include attention traces (implies --json)");
  generate_cmd->add_option("--trace-steps", ga.trace_steps, "Traced steps")->check(CLI::NonNegativeNumber);
  generate_cmd->add_flag("--json", ga.as_json, "Print the full response as JSON");
  gen_knobs.add_to(generate_cmd);
  gen_sampling.add_to(generate_cmd);
  gen_mix.add_to(generate_cmd);

  SweepArgs sa;
  KnobFlags sweep_knobs;
  SamplingFlags sweep_sampling;
  MixModels sweep_mix;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a knob grid and report metrics per cell");
  sweep_cmd->add_option("--model", sa.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  auto* corpus_opt = sweep_cmd->add_option("--corpus", sa.corpus, "Corpus directory")->check(CLI::ExistingDirectory);
  auto* contexts_opt =
      sweep_cmd->add_option("--contexts", sa.contexts, "Dialog JSONL file")->check(CLI::ExistingFile);
  corpus_opt->excludes(contexts_opt);
  sweep_cmd->add_option("--split", sa.split, "Corpus split")->check(CLI::IsMember({"train", "valid", "test", "rare"}));
  sweep_cmd->add_option("--limit", sa.limit, "Number of contexts");
  auto* grid_opt = sweep_cmd->add_option("--grid", sa.grid, "Grid spec such as bk=1,2,5,10,50");
  auto* grid_file_opt = sweep_cmd->add_option("--grid-file", sa.grid_file, "Grid JSON file")->check(CLI::ExistingFile);
  grid_opt->excludes(grid_file_opt);
  sweep_cmd->add_option("--seeds", sa.seeds, "Seeds per context")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--bootstrap", sa.bootstrap, "Bootstrap resamples")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--jsonl", sa.jsonl, "Write one JSON record per cell");
  sweep_cmd->add_flag("--no-ppl", sa.no_ppl, "Skip reference perplexity");
  sweep_knobs.add_to(sweep_cmd);
  sweep_sampling.add_to(sweep_cmd);
  sweep_mix.add_to(sweep_cmd);

  std::string ppl_model, ppl_corpus, ppl_split = "test", ppl_contexts, ppl_task;
  KnobFlags ppl_knobs;
  MixModels ppl_mix;
  auto* ppl_cmd = app.add_subcommand("perplexity", "Teacher-forced perplexity on a split");
  ppl_cmd->add_option("--model", ppl_model, "Checkpoint")->required()->check(CLI::ExistingFile);
  auto* ppl_corpus_opt = ppl_cmd->add_option("--corpus", ppl_corpus, "Corpus directory")->check(CLI::ExistingDirectory);
  auto* ppl_contexts_opt =
      ppl_cmd->add_option("--contexts", ppl_contexts, "Dialog JSONL file")->check(CLI::ExistingFile);
  ppl_corpus_opt->excludes(ppl_contexts_opt);
  ppl_cmd->add_option("--split", ppl_split, "Corpus split")->check(CLI::IsMember({"train", "valid", "test", "rare"}));
  ppl_cmd->add_option("--task", ppl_task, "Example format")->check(CLI::IsMember({"response", "copy", "lm"}));
  ppl_knobs.add_to(ppl_cmd);
  ppl_mix.add_to(ppl_cmd);

  std::string swap_target, swap_donor, swap_out;
  auto* swap_cmd = app.add_subcommand("swap-selfattn", "Replace decoder self-attention with a donor's");
  swap_cmd->add_option("--target", swap_target, "Checkpoint receiving the weights")->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--donor", swap_donor, "Checkpoint providing the weights")->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--out", swap_out, "Output checkpoint")->required();

  std::string frob_a, frob_b, frob_projection = "all";
  auto* frob_cmd = app.add_subcommand("frob-diff", "Frobenius distance between decoder self-attention projections");
  frob_cmd->add_option("a", frob_a, "First checkpoint")->required()->check(CLI::ExistingFile);
  frob_cmd->add_option("b", frob_b, "Second checkpoint")->required()->check(CLI::ExistingFile);
  frob_cmd->add_option("--projection", frob_projection, "Projection")->check(CLI::IsMember({"w_q", "w_k", "w_v", "all"}));

  std::vector<std::string> serve_models;
  std::string serve_bind;
  int serve_trace_steps = 40;
  auto* serve_cmd = app.add_subcommand("serve", "Serve models over HTTP");
  serve_cmd->add_option("--model", serve_models, "Model as id=checkpoint; repeatable")->required();
  serve_cmd->add_option("--bind", serve_bind, "host:port (default 127.0.0.1:8765, or EDTK_BIND)");
  serve_cmd->add_option("--trace-steps", serve_trace_steps, "Traced steps per request")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    CLI::App* active = &app;
    for (auto* sub : app.get_subcommands()) active = sub;
    err << active->help();
    return kExitUsage;
  }

  try {
    if (*corpus) return cmd_corpus(corpus_out, corpus_dialogs, corpus_seed, out);
    if (*train_cmd) return cmd_train(ta, out);
    if (*generate_cmd) return cmd_generate(ga, gen_knobs, gen_sampling, gen_mix, out);
    if (*sweep_cmd) {
      if (sa.corpus.empty() && sa.contexts.empty()) throw CLI::RequiredError("--corpus or --contexts");
      if (sa.grid.empty() && sa.grid_file.empty()) throw CLI::RequiredError("--grid or --grid-file");
      return cmd_sweep(sa, sweep_knobs, sweep_sampling, sweep_mix, out);
    }
    if (*ppl_cmd) {
      if (ppl_corpus.empty() && ppl_contexts.empty()) throw CLI::RequiredError("--corpus or --contexts");
      return cmd_perplexity(ppl_model, ppl_corpus, ppl_split, ppl_contexts, ppl_task, ppl_knobs, ppl_mix, out);
    }
    if (*swap_cmd) return cmd_swap(swap_target, swap_donor, swap_out, out);
    if (*frob_cmd) return cmd_frob(frob_a, frob_b, frob_projection, out);
    if (*serve_cmd) return cmd_serve(serve_models, serve_bind, serve_trace_steps, out);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace edtk
