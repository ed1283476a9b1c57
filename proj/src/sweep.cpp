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

#include "edtk/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "edtk/metrics.hpp"
#include "edtk/transformer.hpp"

namespace edtk {

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stdev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// samples[context][seed]
MetricSummary summarize(const std::vector<std::vector<double>>& samples, int n_seeds) {
  MetricSummary s;
  s.per_seed.assign(static_cast<std::size_t>(n_seeds), 0.0);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& row : samples) {
    for (int k = 0; k < n_seeds; ++k) {
      s.per_seed[static_cast<std::size_t>(k)] += row[static_cast<std::size_t>(k)];
      total += row[static_cast<std::size_t>(k)];
      ++count;
    }
  }
  for (double& v : s.per_seed) v /= static_cast<double>(samples.size());
  s.mean = total / static_cast<double>(count);
  s.stdev = stdev_of(s.per_seed);
  return s;
}

std::vector<double> context_means(const std::vector<std::vector<double>>& samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& row : samples) out.push_back(mean_of(row));
  return out;
}

void compare(MetricSummary& s, const std::vector<std::vector<double>>& cell, const std::vector<std::vector<double>>& base,
             const SweepOptions& options) {
  const auto c = context_means(cell);
  const auto b = context_means(base);
  std::vector<double> d(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) d[i] = c[i] - b[i];
  s.diff = mean_of(d);
  auto [ci, p] = paired_bootstrap(c, b, options.bootstrap_resamples, options.bootstrap_seed);
  s.diff_ci = ci;
  s.p_value = p;
}

nlohmann::json summary_json(const MetricSummary& s) {
  nlohmann::json j{{"mean", s.mean}, {"stdev", s.stdev}, {"per_seed", s.per_seed}};
  if (s.diff) j["diff_vs_base"] = *s.diff;
  if (s.diff_ci) j["diff_ci95"] = {s.diff_ci->low, s.diff_ci->high};
  if (s.p_value) j["p_value"] = *s.p_value;
  return j;
}

}  // namespace

Rng sample_stream(std::uint64_t seed, std::size_t context_index) { return Rng(seed, 0x5a3e0000ULL + context_index); }

CellSamples run_cell(const Model& model, const ActiveKnobs& knobs, const std::vector<SweepContext>& contexts,
                     const std::vector<Matrix>& encoded, const GenerationConfig& gen, int n_seeds) {
  CellSamples out;
  const std::size_t n = contexts.size();
  out.f1_k.assign(n, std::vector<double>(static_cast<std::size_t>(n_seeds)));
  out.rouge_l_k = out.f1_k;
  out.question_turn = out.f1_k;
  out.question_sentence = out.f1_k;
  out.texts.assign(n, std::vector<std::string>(static_cast<std::size_t>(n_seeds)));
  for (std::size_t c = 0; c < n; ++c) {
    const PreparedMemory memory = augment_memory(encoded[c], contexts[c].example.encoder_input, knobs);
    for (int k = 0; k < n_seeds; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      Rng rng = sample_stream(gen.seed + static_cast<std::uint64_t>(k), c);
      const GenerationResult r = generate_from_memory(model, memory, knobs, gen, rng);
      out.f1_k[c][ks] = unigram_f1(r.text, contexts[c].knowledge);
      out.rouge_l_k[c][ks] = rouge_l(r.text, contexts[c].knowledge);
      const std::string texts[1] = {r.text};
      const QuestionCounts q = count_questions(texts);
      out.question_turn[c][ks] = static_cast<double>(q.turn_level);
      out.question_sentence[c][ks] = static_cast<double>(q.sentence_level);
      out.texts[c][ks] = r.text;
    }
  }
  return out;
}

std::pair<Interval, double> paired_bootstrap(const std::vector<double>& cell, const std::vector<double>& base,
                                             int resamples, std::uint64_t seed) {
  if (cell.size() != base.size() || cell.empty()) throw std::invalid_argument("bootstrap: paired samples required");
  if (resamples < 1) throw std::invalid_argument("bootstrap: resamples must be >= 1");
  std::vector<double> d(cell.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = cell[i] - base[i];
  Rng rng(seed, 0xb007);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  int at_or_below = 0;
  int at_or_above = 0;
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += d[rng.below(d.size())];
    m = s / static_cast<double>(d.size());
    at_or_below += m <= 0.0 ? 1 : 0;
    at_or_above += m >= 0.0 ? 1 : 0;
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  const double p = std::min(1.0, 2.0 * std::min(at_or_below, at_or_above) / static_cast<double>(resamples));
  return {Interval{quantile(0.025), quantile(0.975)}, p};
}

std::vector<MetricReport> knob_sweep(const Model& model, const ModelLookup& lookup,
                                     const std::vector<SweepContext>& contexts, const std::vector<SweepCell>& grid,
                                     const GenerationConfig& gen, const SweepOptions& options) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
  if (contexts.empty()) throw std::invalid_argument("sweep: no contexts");
  if (options.n_seeds < 1) throw std::invalid_argument("sweep: n_seeds must be >= 1");
  gen.validate();

  std::vector<Matrix> encoded;
  encoded.reserve(contexts.size());
  for (const auto& c : contexts) encoded.push_back(encode(model, c.example.encoder_input));
  std::vector<FormattedExample> examples;
  for (const auto& c : contexts) examples.push_back(c.example);

  std::vector<MetricReport> rows;
  std::optional<CellSamples> base;
  for (const auto& cell : grid) {
    const ActiveKnobs knobs = resolve_knobs(cell.knobs, model, lookup);
    CellSamples samples = run_cell(model, knobs, contexts, encoded, gen, options.n_seeds);
    MetricReport row;
    row.label = cell.label;
    row.knobs = cell.knobs;
    row.sample_count = contexts.size() * static_cast<std::size_t>(options.n_seeds);
    if (options.compute_ppl) row.ppl_r = perplexity(model, examples, knobs);
    row.f1_k = summarize(samples.f1_k, options.n_seeds);
    row.rouge_l_k = summarize(samples.rouge_l_k, options.n_seeds);
    row.question_rate_turn = summarize(samples.question_turn, options.n_seeds);
    row.question_rate_sentence = summarize(samples.question_sentence, options.n_seeds);
    if (base) {
      compare(row.f1_k, samples.f1_k, base->f1_k, options);
      compare(row.rouge_l_k, samples.rouge_l_k, base->rouge_l_k, options);
      compare(row.question_rate_turn, samples.question_turn, base->question_turn, options);
      compare(row.question_rate_sentence, samples.question_sentence, base->question_sentence, options);
    } else {
      base = std::move(samples);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_report_table(const std::vector<MetricReport>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(24) << "cell" << std::right << std::setw(9) << "ppl_r" << std::setw(9) << "f1_k"
      << std::setw(9) << "rougeL_k" << std::setw(9) << "q_turn" << std::setw(9) << "q_sent" << std::setw(24)
      << "f1_k diff [95% ci]" << std::setw(8) << "n" << '\n';
  out << std::fixed;
  for (const auto& r : rows) {
    out << std::left << std::setw(24) << r.label.substr(0, 23) << std::right << std::setprecision(3) << std::setw(9);
    if (r.ppl_r) {
      out << *r.ppl_r;
    } else {
      out << "-";
    }
    out << std::setw(9) << r.f1_k.mean << std::setw(9) << r.rouge_l_k.mean << std::setw(9) << r.question_rate_turn.mean
        << std::setw(9) << r.question_rate_sentence.mean;
    std::ostringstream diff;
    diff << std::fixed << std::setprecision(3);
    if (r.f1_k.diff && r.f1_k.diff_ci) {
      diff << std::showpos << *r.f1_k.diff << std::noshowpos << " [" << r.f1_k.diff_ci->low << "," << r.f1_k.diff_ci->high
           << "]";
    } else {
      diff << "base";
    }
    out << std::setw(24) << diff.str() << std::setw(8) << r.sample_count << '\n';
  }
  return out.str();
}

nlohmann::json report_to_json(const MetricReport& row) {
  nlohmann::json j{{"label", row.label},
                   {"knobs", knob_config_to_json(row.knobs)},
                   {"f1_k", summary_json(row.f1_k)},
                   {"rouge_l_k", summary_json(row.rouge_l_k)},
                   {"question_rate_turn", summary_json(row.question_rate_turn)},
                   {"question_rate_sentence", summary_json(row.question_rate_sentence)},
                   {"sample_count", row.sample_count}};
  j["ppl_r"] = row.ppl_r ? nlohmann::json(*row.ppl_r) : nlohmann::json(nullptr);
  return j;
}

std::vector<SweepCell> parse_grid_spec(const std::string& spec, const KnobConfig& base) {
  struct Axis {
    std::string key;
    std::vector<std::string> values;
  };
  std::vector<Axis> axes;
  std::stringstream dims(spec);
  std::string dim;
  while (std::getline(dims, dim, ';')) {
    const auto eq = dim.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("grid", "expected key=v1,v2,... in '" + dim + "'");
    Axis axis{dim.substr(0, eq), {}};
    std::stringstream vals(dim.substr(eq + 1));
    std::string v;
    while (std::getline(vals, v, ',')) {
      if (!v.empty()) axis.values.push_back(v);
    }
    if (axis.values.empty()) throw ConfigError("grid." + axis.key, "no values");
    axes.push_back(std::move(axis));
  }
  if (axes.empty()) throw ConfigError("grid", "empty grid specification");

  auto apply = [](KnobConfig& k, const std::string& key, const std::string& text) {
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw ConfigError("grid." + key, "'" + text + "' is not a number");
    }
    BiasProfile& p = k.bias_profile;
    if (key == "bk" || key == "bh") {
      if (p.kind != BiasKind::dialog && p.kind != BiasKind::knowledge) p = BiasProfile::knowledge(1.0, 1.0);
      (key == "bk" ? p.knowledge_value : p.history_value) = value;
    } else if (key == "cap" || key == "slope") {
      if (p.kind != BiasKind::gradual_knowledge) p = BiasProfile::gradual_knowledge();
      (key == "cap" ? p.cap : p.slope) = value;
    } else if (key == "horizon" || key == "value") {
      if (p.kind != BiasKind::control_horizon) p = BiasProfile::control_horizon();
      if (key == "horizon") {
        p.horizon = static_cast<int>(value);
      } else {
        p.value = value;
      }
    } else if (key == "window") {
      k.self_bias_profile = SelfBiasProfile::recency(static_cast<int>(value));
    } else {
      throw ConfigError("grid." + key, "unknown grid key");
    }
  };

  std::vector<SweepCell> cells{{"", base}};
  for (const auto& axis : axes) {
    std::vector<SweepCell> next;
    for (const auto& cell : cells) {
      for (const auto& v : axis.values) {
        SweepCell c = cell;
        apply(c.knobs, axis.key, v);
        c.label += (c.label.empty() ? "" : " ") + axis.key + "=" + v;
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  for (const auto& c : cells) {
    try {
      c.knobs.bias_profile.validate();
      c.knobs.self_bias_profile.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("grid", c.label + ": " + e.what());
    }
  }
  return cells;
}

}  // namespace edtk
