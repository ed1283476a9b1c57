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

#include "edtk/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "edtk/rng.hpp"
#include "json.hpp"

namespace edtk {

namespace {

const std::vector<std::string> kEntities = {
    "paris",    "mars",     "jazz",      "chess",    "tokyo",   "everest", "soccer",   "pizza",
    "einstein", "hamlet",   "beethoven", "amazon",   "sahara",  "titanic", "tennis",   "coffee",
    "venice",   "dolphins", "volcanoes", "penguins", "pyramids", "rome",   "opera",    "baseball",
    "chocolate", "saturn",  "jupiter",   "london",   "sushi",   "guitar",  "piano",    "picasso",
    "newton",   "mozart",   "cairo",     "lions",    "tigers",  "bees",    "iceland",  "shakespeare"};

const std::vector<std::string> kObjects = {
    "history", "music",   "beauty",     "size",      "colors",     "speed",    "design",   "culture",
    "food",    "art",     "rivers",     "mountains", "legends",    "rules",    "flavor",   "songs",
    "stories", "energy",  "science",    "math",      "painting",   "dancing",  "weather",  "architecture",
    "wildlife", "gardens", "festivals", "poetry",    "rhythm",     "strategy", "movies",   "museums",
    "beaches", "temples", "markets",    "bridges",   "castles",    "islands",  "forests",  "deserts"};

const std::vector<std::string> kRelations = {"is famous for its", "is known for its", "has amazing",
                                             "is loved for its",  "is admired for its", "has the best",
                                             "is full of",        "inspired many",     "is linked to",
                                             "is home to"};

const std::vector<std::string> kAdjectives = {"amazing", "interesting", "cool",      "boring", "fun",
                                              "weird",   "lovely",      "wonderful", "strange", "nice"};

const std::vector<std::string> kStatements = {"i really like {n} .",       "my friend loves {n} .",
                                              "i watched a show about {n} .", "{n} is pretty great .",
                                              "i think {n} is {a} .",       "we talked about {n} yesterday ."};

const std::vector<std::string> kQuestions = {"do you like {n} ?", "what do you think of {n} ?", "have you seen {n} ?",
                                             "do you know about {n} ?"};

const std::vector<std::string> kPlain = {"i also like {x} and {y} , but {x} is my favorite .",
                                         "{x} sounds fun , and {y} too .", "me too , i enjoy {x} ."};

const std::vector<std::string> kKnowledge = {"i heard that {f} .", "fun fact , {f} ."};

const std::vector<std::string> kQuestionResponses = {"do you like {x} or {y} ?", "what do you think about {x} ?",
                                                     "have you ever tried {x} ?"};

const std::vector<std::string> kFeedback = {"wow , that is so {a} !", "haha , that sounds {a} .", "nice , i agree ."};

struct Fact {
  int subject;
  int relation;
  int first;
  int second;

  std::string clause() const {
    return kEntities[static_cast<std::size_t>(subject)] + " " + kRelations[static_cast<std::size_t>(relation)] + " " +
           kObjects[static_cast<std::size_t>(first)] + " and " + kObjects[static_cast<std::size_t>(second)];
  }
  auto key() const { return std::tuple(subject, relation, first, second); }
};

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[static_cast<std::size_t>(rng.below(items.size()))];
}

std::string fill(std::string text, const std::string& slot, const std::string& value) {
  for (auto at = text.find(slot); at != std::string::npos; at = text.find(slot, at + value.size())) {
    text.replace(at, slot.size(), value);
  }
  return text;
}

std::vector<Fact> fact_bank(const CorpusSpec& spec) {
  Rng rng(spec.seed, 0x0fac7);
  std::set<std::tuple<int, int, int, int>> seen;
  std::vector<Fact> facts;
  while (static_cast<int>(facts.size()) < spec.n_facts) {
    Fact f{static_cast<int>(rng.below(kEntities.size())), static_cast<int>(rng.below(kRelations.size())),
           static_cast<int>(rng.below(kObjects.size())), static_cast<int>(rng.below(kObjects.size()))};
    if (f.first == f.second || !seen.insert(f.key()).second) continue;
    facts.push_back(f);
  }
  return facts;
}

ResponseStyle sample_style(const CorpusSpec& spec, int question_turns, Rng& rng) {
  std::vector<std::pair<ResponseStyle, double>> weights;
  double total = 0.0;
  for (const auto& [style, w] : spec.style_weights) {
    double v = w;
    if (style == ResponseStyle::question) v *= 1.0 + spec.question_affinity * question_turns;
    weights.emplace_back(style, v);
    total += v;
  }
  double u = rng.uniform() * total;
  for (const auto& [style, w] : weights) {
    if (u < w) return style;
    u -= w;
  }
  for (auto it = weights.rbegin(); it != weights.rend(); ++it) {
    if (it->second > 0.0) return it->first;
  }
  return weights.back().first;
}

Dialog make_dialog(const CorpusSpec& spec, const std::vector<Fact>& facts, int fact_id, Rng& rng) {
  const Fact& fact = facts[static_cast<std::size_t>(fact_id)];
  Dialog d;
  d.fact_id = fact_id;
  d.knowledge = fact.clause() + " .";

  auto history_noun = [&]() -> std::string {
    const double u = rng.uniform();
    if (u < 0.2) return kEntities[static_cast<std::size_t>(fact.subject)];
    if (u < 0.3) return kObjects[static_cast<std::size_t>(fact.first)];
    if (u < 0.4) return kObjects[static_cast<std::size_t>(fact.second)];
    return rng.uniform() < 0.5 ? pick(kEntities, rng) : pick(kObjects, rng);
  };

  std::vector<std::string> nouns;
  int question_turns = 0;
  for (int i = 0; i < spec.turn_count; ++i) {
    const bool question = rng.uniform() < spec.history_question_rate;
    question_turns += question ? 1 : 0;
    const std::string noun = history_noun();
    nouns.push_back(noun);
    std::string turn = question ? pick(kQuestions, rng) : pick(kStatements, rng);
    d.turns.push_back(fill(fill(turn, "{n}", noun), "{a}", pick(kAdjectives, rng)));
  }

  d.style = sample_style(spec, question_turns, rng);
  // Slot fillers come from the fact or from the history.
  auto filler = [&]() -> std::string {
    if (rng.uniform() < spec.knowledge_slot_rate) {
      switch (rng.below(3)) {
        case 0: return kEntities[static_cast<std::size_t>(fact.subject)];
        case 1: return kObjects[static_cast<std::size_t>(fact.first)];
        default: return kObjects[static_cast<std::size_t>(fact.second)];
      }
    }
    return nouns[static_cast<std::size_t>(rng.below(nouns.size()))];
  };
  const std::string x = filler();
  std::string y = filler();
  for (int tries = 0; y == x && tries < 8; ++tries) y = filler();
  std::string response;
  switch (d.style) {
    case ResponseStyle::plain: response = fill(fill(pick(kPlain, rng), "{x}", x), "{y}", y); break;
    case ResponseStyle::knowledge_copying: response = fill(pick(kKnowledge, rng), "{f}", fact.clause()); break;
    case ResponseStyle::question: response = fill(fill(pick(kQuestionResponses, rng), "{x}", x), "{y}", y); break;
    case ResponseStyle::feedback: response = fill(pick(kFeedback, rng), "{a}", pick(kAdjectives, rng)); break;
  }
  d.response = response;
  return d;
}

std::vector<int> ids_for(const Vocabulary& vocab, const std::string& text, bool lenient) {
  if (!lenient) return vocab.encode(text);
  std::vector<int> ids;
  for (const auto& w : Vocabulary::tokenize(text)) ids.push_back(vocab.contains(w) ? vocab.id(w) : Vocabulary::kUnk);
  return ids;
}

void put_bucket(SegmentedContext& ctx, const std::vector<int>& ids, int size, Segment label) {
  for (int i = 0; i < size; ++i) {
    const bool real = i < static_cast<int>(ids.size());
    ctx.token_ids.push_back(real ? ids[static_cast<std::size_t>(i)] : Vocabulary::kPad);
    ctx.segments.push_back(real ? label : Segment::pad());
  }
}

int speaker_for(int turn, int turn_count) {
  return (turn_count - 1 - turn) % 2 == 0 ? Vocabulary::kSpeaker1 : Vocabulary::kSpeaker2;
}

// Layout with explicit per-section ids; empty sections become pads.
SegmentedContext layout(const std::vector<int>& knowledge, const std::vector<std::vector<int>>& turns,
                        const Buckets& buckets) {
  SegmentedContext ctx;
  ctx.token_ids.push_back(Vocabulary::kBos);
  ctx.segments.push_back(Segment::knowledge());
  put_bucket(ctx, knowledge, buckets.knowledge, Segment::knowledge());
  for (int i = 0; i < buckets.turns; ++i) {
    ctx.token_ids.push_back(speaker_for(i, buckets.turns));
    ctx.segments.push_back(Segment::history(i));
    put_bucket(ctx, turns[static_cast<std::size_t>(i)], buckets.turn, Segment::history(i));
  }
  return ctx;
}

std::vector<int> target_for(std::vector<int> ids) {
  ids.insert(ids.begin(), Vocabulary::kBos);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

}  // namespace

std::string to_string(ResponseStyle style) {
  switch (style) {
    case ResponseStyle::plain: return "plain";
    case ResponseStyle::knowledge_copying: return "knowledge_copying";
    case ResponseStyle::question: return "question";
    case ResponseStyle::feedback: return "feedback";
  }
  return "plain";
}

ResponseStyle response_style_from_string(const std::string& name) {
  for (ResponseStyle s : {ResponseStyle::plain, ResponseStyle::knowledge_copying, ResponseStyle::question,
                          ResponseStyle::feedback}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown response style '" + name + "'");
}

void CorpusSpec::validate() const {
  if (n_dialogs < 10) throw std::invalid_argument("corpus: n_dialogs must be >= 10");
  if (turn_count < 1) throw std::invalid_argument("corpus: turn_count must be >= 1");
  if (style_weights.empty()) throw std::invalid_argument("corpus: no response styles");
  double total = 0.0;
  for (const auto& [style, w] : style_weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("corpus: style weights must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("corpus: style weights must sum to 1");
  if (question_affinity < 0.0) throw std::invalid_argument("corpus: question_affinity must be >= 0");
  if (!(history_question_rate >= 0.0 && history_question_rate <= 1.0)) {
    throw std::invalid_argument("corpus: history_question_rate must lie in [0, 1]");
  }
  if (n_rare_facts < 1 || n_rare_facts >= n_facts) throw std::invalid_argument("corpus: need 1 <= n_rare_facts < n_facts");
  const auto combos = static_cast<double>(kEntities.size() * kRelations.size() * kObjects.size() * (kObjects.size() - 1));
  if (n_facts > combos / 2) throw std::invalid_argument("corpus: n_facts exceeds the template bank");
}

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  const std::vector<Fact> facts = fact_bank(spec);
  const int frequent = spec.n_facts - spec.n_rare_facts;

  const int n_train = spec.n_dialogs * 8 / 10;
  const int n_valid = spec.n_dialogs / 10;
  const int n_test = spec.n_dialogs - n_train - n_valid;
  auto make_split = [&](int n, std::uint64_t stream, bool rare) {
    Rng rng(spec.seed, stream);
    std::vector<Dialog> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int fact = rare ? frequent + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_rare_facts)))
                            : static_cast<int>(rng.below(static_cast<std::uint64_t>(frequent)));
      out.push_back(make_dialog(spec, facts, fact, rng));
    }
    return out;
  };
  Corpus c;
  c.train = make_split(n_train, 1, false);
  c.valid = make_split(n_valid, 2, false);
  c.test = make_split(n_test, 3, false);
  c.rare = make_split(spec.n_dialogs / 10, 4, true);
  c.vocab = build_vocabulary({&c.train, &c.valid, &c.test, &c.rare});
  if (c.vocab.size() > spec.max_vocab) {
    throw std::length_error("corpus: vocabulary of " + std::to_string(c.vocab.size()) + " words exceeds max_vocab " +
                            std::to_string(spec.max_vocab));
  }
  return c;
}

Vocabulary build_vocabulary(const std::vector<const std::vector<Dialog>*>& splits) {
  std::set<std::string> words;
  auto add = [&](const std::string& text) {
    for (auto& w : Vocabulary::tokenize(text)) words.insert(std::move(w));
  };
  for (const auto* split : splits) {
    for (const Dialog& d : *split) {
      add(d.knowledge);
      for (const auto& t : d.turns) add(t);
      add(d.response);
    }
  }
  for (const auto& p : question_phrases()) add(p);
  Vocabulary vocab;
  for (const auto& w : words) {
    if (!vocab.contains(w)) vocab.add(w);
  }
  return vocab;
}

FormattedExample format_example(const Vocabulary& vocab, const std::string& knowledge,
                                const std::vector<std::string>& history, const std::string& response,
                                const Buckets& buckets, bool lenient) {
  if (static_cast<int>(history.size()) != buckets.turns) {
    throw std::invalid_argument("format_example: expected " + std::to_string(buckets.turns) + " history turns, got " +
                                std::to_string(history.size()));
  }
  std::vector<std::vector<int>> turns;
  for (const auto& t : history) turns.push_back(ids_for(vocab, t, lenient));
  FormattedExample ex;
  ex.encoder_input = layout(ids_for(vocab, knowledge, lenient), turns, buckets);
  ex.decoder_target = target_for(ids_for(vocab, response, lenient));
  return ex;
}

FormattedExample format_example(const Vocabulary& vocab, const Dialog& dialog, const Buckets& buckets) {
  return format_example(vocab, dialog.knowledge, dialog.turns, dialog.response, buckets);
}

std::vector<FormattedExample> format_all(const Vocabulary& vocab, const std::vector<Dialog>& dialogs,
                                         const Buckets& buckets) {
  std::vector<FormattedExample> out;
  out.reserve(dialogs.size());
  for (const Dialog& d : dialogs) out.push_back(format_example(vocab, d, buckets));
  return out;
}

std::vector<FormattedExample> format_copy_task(const Vocabulary& vocab, const std::vector<Dialog>& dialogs,
                                               const Buckets& buckets, std::uint64_t seed) {
  Rng rng(seed, 0xc0b1);
  std::vector<FormattedExample> out;
  out.reserve(dialogs.size());
  for (const Dialog& d : dialogs) {
    const auto choice = static_cast<int>(rng.below(static_cast<std::uint64_t>(buckets.turns + 2)));
    std::vector<int> knowledge;
    std::vector<std::vector<int>> turns(static_cast<std::size_t>(buckets.turns));
    std::vector<int> target;
    if (choice == 0) {
      knowledge = vocab.encode(d.knowledge);
      knowledge.resize(std::min<std::size_t>(knowledge.size(), static_cast<std::size_t>(buckets.knowledge)));
      target = knowledge;
    } else if (choice == buckets.turns + 1) {
      knowledge = vocab.encode(d.response);
      knowledge.resize(std::min<std::size_t>(knowledge.size(), static_cast<std::size_t>(buckets.knowledge)));
      target = knowledge;
    } else {
      auto& t = turns[static_cast<std::size_t>(choice - 1)];
      t = vocab.encode(d.turns.at(static_cast<std::size_t>(choice - 1)));
      t.resize(std::min<std::size_t>(t.size(), static_cast<std::size_t>(buckets.turn)));
      target = t;
    }
    out.push_back({layout(knowledge, turns, buckets), target_for(target)});
  }
  return out;
}

FormattedExample blank_context_example(const Vocabulary& vocab, const std::string& response, const Buckets& buckets) {
  const std::vector<std::vector<int>> turns(static_cast<std::size_t>(buckets.turns));
  return {layout({}, turns, buckets), target_for(ids_for(vocab, response, true))};
}

std::vector<FormattedExample> format_response_lm(const Vocabulary& vocab, const std::vector<Dialog>& dialogs,
                                                 const Buckets& buckets) {
  std::vector<FormattedExample> out;
  out.reserve(dialogs.size());
  for (const Dialog& d : dialogs) out.push_back(blank_context_example(vocab, d.response, buckets));
  return out;
}

void write_jsonl(const std::vector<Dialog>& dialogs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const Dialog& d : dialogs) {
    nlohmann::json j{{"knowledge", d.knowledge}, {"turns", d.turns}, {"response", d.response}, {"style", to_string(d.style)}};
    out << j.dump() << '\n';
  }
}

std::vector<Dialog> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<Dialog> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Dialog d;
      d.knowledge = j.at("knowledge").get<std::string>();
      d.turns = j.at("turns").get<std::vector<std::string>>();
      d.response = j.at("response").get<std::string>();
      d.style = response_style_from_string(j.value("style", std::string("plain")));
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> question_phrases() {
  return {"do you like music ?",         "what do you think of art ?", "have you seen the pyramids ?",
          "do you know about jazz ?",    "do you like pizza ?",        "what do you think about chess ?",
          "have you ever tried sushi ?", "do you like tennis ?",       "have you seen paris ?",
          "what do you think of poetry ?", "do you know about science ?", "have you ever tried coffee ?"};
}

}  // namespace edtk
