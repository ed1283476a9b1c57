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

#include "edtk/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "edtk/autograd.hpp"
#include "edtk/generation.hpp"
#include "edtk/transformer.hpp"

namespace edtk {

std::string to_string(FreezeKind kind) {
  switch (kind) {
    case FreezeKind::none: return "none";
    case FreezeKind::decoder_except_cross_attention: return "decoder_except_cross_attention";
    case FreezeKind::custom: return "custom";
  }
  return "none";
}

FreezeKind freeze_kind_from_string(const std::string& name) {
  for (FreezeKind k : {FreezeKind::none, FreezeKind::decoder_except_cross_attention, FreezeKind::custom}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown freeze scheme '" + name + "'");
}

std::size_t FreezeMask::trainable_scalars(const Parameters& params) const {
  std::size_t n = 0;
  params.for_each([&](const std::string& name, const Matrix& m) {
    if (!is_frozen(name)) n += static_cast<std::size_t>(m.size());
  });
  return n;
}

FreezeMask make_freeze_mask(const FreezeScheme& scheme, const ModelConfig& config) {
  config.validate();
  Rng rng(0);
  const std::vector<std::string> names = init_parameters(config, rng).names();
  FreezeMask mask;
  switch (scheme.kind) {
    case FreezeKind::none: break;
    case FreezeKind::decoder_except_cross_attention:
      for (const auto& name : names) {
        if (name.starts_with("decoder.") && name.find(".cross_attn.") == std::string::npos) mask.frozen.insert(name);
      }
      break;
    case FreezeKind::custom: {
      const std::set<std::string> known(names.begin(), names.end());
      for (const auto& [name, frozen] : scheme.custom) {
        if (!known.contains(name)) throw std::invalid_argument("freeze mask: unknown parameter '" + name + "'");
        if (frozen) mask.frozen.insert(name);
      }
      for (const auto& name : names) {
        if (!scheme.custom.contains(name)) throw std::invalid_argument("freeze mask: parameter '" + name + "' unassigned");
      }
      break;
    }
  }
  return mask;
}

namespace {

LossAndGrads batch_loss(const ModelConfig& config, const Parameters& params, std::span<const FormattedExample> batch,
                        const LossOptions& options, const FreezeMask* mask) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grads: empty batch");
  LossAndGrads out;
  out.grads = params.zeros_like();
  Tape tape(true);
  ParameterBinding bind(tape, params, &out.grads);
  ForwardOptions fwd;
  fwd.dropout = options.dropout;
  fwd.rng = options.rng;

  int total_tokens = 0;
  for (const auto& ex : batch) {
    if (ex.decoder_target.size() < 2) throw std::invalid_argument("loss_and_grads: target needs at least two tokens");
    total_tokens += static_cast<int>(ex.decoder_target.size()) - 1;
  }
  std::optional<Tape::Var> loss;
  for (const auto& ex : batch) {
    const std::span<const int> target(ex.decoder_target);
    const auto n = target.size() - 1;
    Tape::Var memory = encode_on_tape(tape, bind, config, params, ex.encoder_input, fwd);
    const std::vector<std::uint8_t> memory_mask = ex.encoder_input.key_mask();
    const auto rows = static_cast<Eigen::Index>(n);
    Matrix cross, self;
    ForwardOptions biased = fwd;
    if (!options.cross_bias.is_none()) {
      cross.resize(rows, static_cast<Eigen::Index>(ex.encoder_input.size()));
      for (Eigen::Index t = 0; t < rows; ++t) {
        const BiasVector b = build_bias_vector(options.cross_bias, ex.encoder_input.segments, static_cast<int>(t));
        cross.row(t) = Eigen::Map<const RowVector>(b.data(), static_cast<Eigen::Index>(b.size()));
      }
      biased.cross_bias = &cross;
      biased.cross_bias_layers = options.bias_layers;
    }
    if (!options.self_bias.is_none()) {
      self = Matrix::Zero(rows, rows);
      for (Eigen::Index t = 0; t < rows; ++t) {
        const BiasVector b = build_self_bias_vector(options.self_bias, static_cast<int>(t));
        self.row(t).head(t + 1) = Eigen::Map<const RowVector>(b.data(), t + 1);
      }
      biased.self_bias = &self;
    }
    Tape::Var logits = decode_on_tape(tape, bind, config, params, memory, memory_mask, target.first(n), biased);
    Tape::Var ce = tape.cross_entropy(logits, target.subspan(1), -1);
    Tape::Var weighted = tape.scale(ce, static_cast<double>(n) / total_tokens);
    loss = loss ? tape.add(*loss, weighted) : weighted;
  }
  out.loss = tape.value(*loss)(0, 0);
  out.tokens = total_tokens;
  if (!std::isfinite(out.loss)) {
    throw TrainingError("non-finite loss " + std::to_string(out.loss) + " on a batch of " + std::to_string(batch.size()) +
                        " examples (" + std::to_string(total_tokens) + " target tokens)");
  }
  tape.backward(*loss);
  if (mask) {
    out.grads.for_each([&](const std::string& name, Matrix& g) {
      if (mask->is_frozen(name)) g.setZero();
    });
  }
  return out;
}

}  // namespace

LossAndGrads loss_and_grads(const Model& model, std::span<const FormattedExample> batch, const LossOptions& options,
                            const FreezeMask* mask) {
  return batch_loss(model.config, model.params, batch, options, mask);
}

AdamState AdamState::zeros_like(const Parameters& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(Parameters& params, const Parameters& grads, AdamState& state, const AdamConfig& config,
               const FreezeMask* mask) {
  if (!(config.lr > 0.0)) throw std::invalid_argument("adam: lr must be > 0");
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  std::map<std::string, const Matrix*> g_by_name;
  for_each_pair(grads, params, [&](const std::string& name, const Matrix& g, const Matrix&) { g_by_name[name] = &g; });
  std::map<std::string, Matrix*> m_by_name;
  std::map<std::string, Matrix*> v_by_name;
  for_each_pair(state.m, params, [&](const std::string& name, Matrix& m, const Matrix&) { m_by_name[name] = &m; });
  for_each_pair(state.v, params, [&](const std::string& name, Matrix& v, const Matrix&) { v_by_name[name] = &v; });

  params.for_each([&](const std::string& name, Matrix& p) {
    if (mask && mask->is_frozen(name)) return;
    const Matrix& g = *g_by_name.at(name);
    Matrix& m = *m_by_name.at(name);
    Matrix& v = *v_by_name.at(name);
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
    p.array() -= config.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.eps);
  });
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be > 0");
  if (batch_size < 1 || grad_accum < 1) throw std::invalid_argument("train config: batch_size and grad_accum must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
  if (patience < 0) throw std::invalid_argument("train config: patience must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("train config: dropout must lie in [0, 1)");
  if (max_seconds < 0.0) throw std::invalid_argument("train config: max_seconds must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"batch_size", c.batch_size},
       {"grad_accum", c.grad_accum},
       {"max_epochs", c.max_epochs},
       {"patience", c.patience},
       {"dropout", c.dropout},
       {"freeze", to_string(c.freeze.kind)},
       {"dec_self_attn_init", c.freeze.dec_self_attn_init == SelfAttentionInit::random ? "random" : "pretrained"},
       {"seed", c.seed},
       {"max_seconds", c.max_seconds}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.grad_accum = j.value("grad_accum", c.grad_accum);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.dropout = j.value("dropout", c.dropout);
  c.freeze.kind = freeze_kind_from_string(j.value("freeze", std::string("none")));
  if (c.freeze.kind == FreezeKind::custom) {
    c.freeze.custom = j.at("frozen").get<std::map<std::string, bool>>();
  }
  const std::string init = j.value("dec_self_attn_init", std::string("pretrained"));
  if (init != "pretrained" && init != "random") throw std::invalid_argument("train config: dec_self_attn_init must be pretrained or random");
  c.freeze.dec_self_attn_init = init == "random" ? SelfAttentionInit::random : SelfAttentionInit::pretrained;
  c.seed = j.value("seed", c.seed);
  c.max_seconds = j.value("max_seconds", c.max_seconds);
  c.validate();
}

std::vector<double> TrainResult::valid_ppl() const {
  std::vector<double> out;
  for (const auto& e : history) out.push_back(e.valid_ppl);
  return out;
}

int early_stop_epoch(std::span<const double> valid_ppl, int patience) {
  double best = std::numeric_limits<double>::infinity();
  int bad = 0;
  for (std::size_t i = 0; i < valid_ppl.size(); ++i) {
    if (valid_ppl[i] < best) {
      best = valid_ppl[i];
      bad = 0;
    } else if (++bad >= std::max(patience, 1)) {
      return static_cast<int>(i) + 1;
    }
  }
  return -1;
}

TrainResult train(const Model& model, std::span<const FormattedExample> train_set,
                  std::span<const FormattedExample> valid_set, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty() || valid_set.empty()) throw std::invalid_argument("train: empty train or validation set");
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  Model work{model.config, model.params, model.vocab};
  Rng init_rng(config.seed, 0x5e1f);
  if (config.freeze.dec_self_attn_init == SelfAttentionInit::random) randomize_decoder_self_attention(work.params, init_rng);
  const FreezeMask mask = make_freeze_mask(config.freeze, model.config);
  AdamState adam = AdamState::zeros_like(work.params);
  const AdamConfig adam_config{config.lr};
  Rng dropout_rng(config.seed, 0xd409);
  const double divergence = 10.0 * std::log(static_cast<double>(model.config.vocab_size));

  TrainResult result;
  result.best = work.params;
  double best_ppl = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  bool out_of_time = false;

  for (int epoch = 1; epoch <= config.max_epochs && !out_of_time; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle(config.seed, 0x1000 + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    Parameters acc = work.params.zeros_like();
    int pending = 0;
    double loss_sum = 0.0;
    long token_sum = 0;
    auto flush = [&] {
      if (pending == 0) return;
      acc.for_each([&](const std::string&, Matrix& g) { g /= static_cast<double>(pending); });
      adam_step(work.params, acc, adam, adam_config, &mask);
      ++result.optimizer_steps;
      acc.for_each([](const std::string&, Matrix& g) { g.setZero(); });
      pending = 0;
    };

    std::vector<FormattedExample> batch;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(config.batch_size)) {
      batch.clear();
      for (std::size_t k = at; k < std::min(order.size(), at + static_cast<std::size_t>(config.batch_size)); ++k) {
        batch.push_back(train_set[order[k]]);
      }
      const LossAndGrads lg =
          batch_loss(work.config, work.params, batch, LossOptions{config.dropout, &dropout_rng}, &mask);
      loss_sum += lg.loss * lg.tokens;
      token_sum += lg.tokens;
      for_each_pair(acc, lg.grads, [](const std::string&, Matrix& a, const Matrix& g) { a += g; });
      if (++pending == config.grad_accum) {
        flush();
        if (config.max_seconds > 0.0 && elapsed() > config.max_seconds) {
          out_of_time = true;
          break;
        }
      }
    }
    flush();

    EpochReport report;
    report.epoch = epoch;
    report.train_loss = loss_sum / static_cast<double>(std::max<long>(token_sum, 1));
    if (report.train_loss > divergence) {
      throw TrainingError("training diverged: epoch " + std::to_string(epoch) + " loss " +
                          std::to_string(report.train_loss) + " exceeds 10 ln V = " + std::to_string(divergence));
    }
    report.valid_ppl = perplexity(work, valid_set);
    report.seconds = elapsed();
    result.history.push_back(report);
    if (on_epoch) on_epoch(report);

    if (report.valid_ppl < best_ppl) {
      best_ppl = report.valid_ppl;
      result.best = work.params;
      result.best_epoch = epoch;
      bad_epochs = 0;
    } else if (++bad_epochs >= std::max(config.patience, 1)) {
      result.early_stopped = true;
      result.stop_reason = "early_stopping";
      break;
    }
    if (out_of_time) result.stop_reason = "time_budget";
  }
  if (result.stop_reason.empty()) result.stop_reason = "max_epochs";
  result.seconds = elapsed();
  return result;
}

}  // namespace edtk
