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

// Knob sweeps: every grid cell generates over every context for several
// seeds; metrics are aggregated per cell and compared with the first (base)
// cell through a paired bootstrap over contexts.

#ifndef EDTK_SWEEP_HPP
#define EDTK_SWEEP_HPP

#include <optional>
#include <string>
#include <vector>

#include "edtk/generation.hpp"
#include "edtk/knob_config.hpp"

namespace edtk {

struct SweepContext {
  FormattedExample example;
  std::string knowledge;
  std::string reference;
};

struct SweepCell {
  std::string label;
  KnobConfig knobs;
};

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

struct MetricSummary {
  double mean = 0.0;
  /// Sample standard deviation of the per-seed means.
  double stdev = 0.0;
  std::vector<double> per_seed;
  /// Paired difference against the base cell (absent for the base itself).
  std::optional<double> diff;
  std::optional<Interval> diff_ci;
  std::optional<double> p_value;
};

struct MetricReport {
  std::string label;
  KnobConfig knobs;
  std::optional<double> ppl_r;
  MetricSummary f1_k;
  MetricSummary rouge_l_k;
  MetricSummary question_rate_turn;
  /// Question sentences per response; may exceed 1.
  MetricSummary question_rate_sentence;
  std::size_t sample_count = 0;
};

struct SweepOptions {
  int n_seeds = 5;
  int bootstrap_resamples = 10000;
  std::uint64_t bootstrap_seed = 20240;
  bool compute_ppl = true;
};

/// Per-context, per-seed raw scores of one cell.
struct CellSamples {
  std::vector<std::vector<double>> f1_k;
  std::vector<std::vector<double>> rouge_l_k;
  std::vector<std::vector<double>> question_turn;
  std::vector<std::vector<double>> question_sentence;
  std::vector<std::vector<std::string>> texts;
};

/// Generation stream for one (seed, context) pair. Independent of the cell,
/// so identical cells reproduce identical samples.
Rng sample_stream(std::uint64_t seed, std::size_t context_index);

CellSamples run_cell(const Model& model, const ActiveKnobs& knobs, const std::vector<SweepContext>& contexts,
                     const std::vector<Matrix>& encoded, const GenerationConfig& gen, int n_seeds);

/// Paired bootstrap over contexts of mean(cell - base). Returns the 95%
/// percentile interval and a two-sided p-value.
std::pair<Interval, double> paired_bootstrap(const std::vector<double>& cell, const std::vector<double>& base,
                                             int resamples, std::uint64_t seed);

std::vector<MetricReport> knob_sweep(const Model& model, const ModelLookup& lookup,
                                     const std::vector<SweepContext>& contexts, const std::vector<SweepCell>& grid,
                                     const GenerationConfig& gen, const SweepOptions& options = {});

/// Fixed-width text table, one row per cell.
std::string format_report_table(const std::vector<MetricReport>& rows);
/// One JSON record per cell.
nlohmann::json report_to_json(const MetricReport& row);

/// Parses "bk=1,2,5,10,50" style grids into cells over a Knowledge profile
/// (bh fixed by `base`). Supported keys: bk, bh, cap, slope, horizon, value,
/// window.
std::vector<SweepCell> parse_grid_spec(const std::string& spec, const KnobConfig& base);

}  // namespace edtk

#endif  // EDTK_SWEEP_HPP
