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

// Teacher-forced maximum-likelihood training: batched loss and gradients,
// Adam with freeze masks, early stopping on validation perplexity.

#ifndef EDTK_TRAINING_HPP
#define EDTK_TRAINING_HPP

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "edtk/corpus.hpp"
#include "edtk/knobs.hpp"
#include "edtk/model.hpp"

namespace edtk {

enum class FreezeKind { none, decoder_except_cross_attention, custom };
enum class SelfAttentionInit { pretrained, random };

std::string to_string(FreezeKind kind);
FreezeKind freeze_kind_from_string(const std::string& name);

struct FreezeScheme {
  FreezeKind kind = FreezeKind::none;
  /// For custom schemes: every parameter name mapped to true when frozen.
  std::map<std::string, bool> custom;
  SelfAttentionInit dec_self_attn_init = SelfAttentionInit::pretrained;
};

/// Names of frozen tensors. Everything else is trainable.
struct FreezeMask {
  std::set<std::string> frozen;

  bool is_frozen(const std::string& name) const { return frozen.contains(name); }
  std::size_t trainable_scalars(const Parameters& params) const;
};

/// Throws std::invalid_argument when a custom mask names unknown parameters
/// or leaves some parameter unassigned.
FreezeMask make_freeze_mask(const FreezeScheme& scheme, const ModelConfig& config);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossOptions {
  double dropout = 0.0;
  Rng* rng = nullptr;
  /// Attention biasing applied under teacher forcing.
  BiasProfile cross_bias;
  std::optional<std::vector<int>> bias_layers;
  SelfBiasProfile self_bias;
};

struct LossAndGrads {
  double loss = 0.0;
  int tokens = 0;
  Parameters grads;
};

/// Mean token cross-entropy over every target position of the batch, with
/// gradients for every tensor. Frozen tensors receive exactly zero gradient.
/// Throws TrainingError on a non-finite loss.
LossAndGrads loss_and_grads(const Model& model, std::span<const FormattedExample> batch, const LossOptions& options = {},
                            const FreezeMask* mask = nullptr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Parameters m;
  Parameters v;
  long step = 0;

  static AdamState zeros_like(const Parameters& params);
};

/// One bias-corrected Adam update. Frozen tensors and their moments are left
/// untouched.
void adam_step(Parameters& params, const Parameters& grads, AdamState& state, const AdamConfig& config,
               const FreezeMask* mask = nullptr);

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 5;
  int grad_accum = 4;
  int max_epochs = 20;
  int patience = 1;
  double dropout = 0.1;
  FreezeScheme freeze;
  std::uint64_t seed = 1;
  /// Wall-clock budget in seconds; 0 disables it.
  double max_seconds = 0.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochReport {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_ppl = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Parameters best;
  std::vector<EpochReport> history;
  int best_epoch = 0;
  bool early_stopped = false;
  std::string stop_reason;
  double seconds = 0.0;
  long optimizer_steps = 0;

  std::vector<double> valid_ppl() const;
};

/// Index of the epoch after which training stops under the patience rule,
/// given per-epoch validation perplexities. Returns -1 when it never fires.
int early_stop_epoch(std::span<const double> valid_ppl, int patience);

using EpochCallback = std::function<void(const EpochReport&)>;

/// Trains a copy of `model.params`, returning the best-validation weights.
TrainResult train(const Model& model, std::span<const FormattedExample> train_set,
                  std::span<const FormattedExample> valid_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace edtk

#endif  // EDTK_TRAINING_HPP
