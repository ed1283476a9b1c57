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

#include "edtk/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace edtk {

std::string to_string(DecoderVariant v) { return v == DecoderVariant::parallel ? "parallel" : "sequential"; }

DecoderVariant decoder_variant_from_string(const std::string& name) {
  if (name == "sequential") return DecoderVariant::sequential;
  if (name == "parallel") return DecoderVariant::parallel;
  throw std::invalid_argument("unknown decoder variant '" + name + "'");
}

bool ModelConfig::has_cross_attention(int layer) const {
  return std::binary_search(cross_attn_layers.begin(), cross_attn_layers.end(), layer);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (vocab_size <= Vocabulary::kUnk) fail("vocab_size must exceed the special tokens");
  if (d_model <= 0 || n_heads <= 0) fail("d_model and n_heads must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (n_enc_layers < 0 || n_dec_layers < 1) fail("layer counts out of range");
  if (d_ff <= 0) fail("d_ff must be positive");
  if (max_positions < 2) fail("max_positions too small");
  if (!(layer_norm_eps > 0)) fail("layer_norm_eps must be positive");
  if (!std::is_sorted(cross_attn_layers.begin(), cross_attn_layers.end()) ||
      std::adjacent_find(cross_attn_layers.begin(), cross_attn_layers.end()) != cross_attn_layers.end()) {
    fail("cross_attn_layers must be sorted and unique");
  }
  for (int l : cross_attn_layers) {
    if (l < 0 || l >= n_dec_layers) fail("cross_attn_layers index " + std::to_string(l) + " out of range");
  }
}

std::vector<int> ModelConfig::all_layers(int n) {
  std::vector<int> layers(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) layers[static_cast<std::size_t>(i)] = i;
  return layers;
}

ModelConfig ModelConfig::desk_scale(int vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.cross_attn_layers = all_layers(c.n_dec_layers);
  return c;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},
                     {"d_model", c.d_model},
                     {"n_heads", c.n_heads},
                     {"n_enc_layers", c.n_enc_layers},
                     {"n_dec_layers", c.n_dec_layers},
                     {"d_ff", c.d_ff},
                     {"max_positions", c.max_positions},
                     {"decoder_variant", to_string(c.decoder_variant)},
                     {"cross_attn_layers", c.cross_attn_layers},
                     {"layer_norm_eps", c.layer_norm_eps}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_enc_layers = j.at("n_enc_layers").get<int>();
  c.n_dec_layers = j.at("n_dec_layers").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.max_positions = j.at("max_positions").get<int>();
  c.decoder_variant = decoder_variant_from_string(j.at("decoder_variant").get<std::string>());
  c.cross_attn_layers = j.at("cross_attn_layers").get<std::vector<int>>();
  c.layer_norm_eps = j.value("layer_norm_eps", 1e-5);
}

namespace {

template <typename P, typename Fn>
void visit(P& p, Fn&& fn) {
  auto attn = [&](const std::string& prefix, auto& a) {
    fn(prefix + ".w_q", a.w_q);
    fn(prefix + ".w_k", a.w_k);
    fn(prefix + ".w_v", a.w_v);
    fn(prefix + ".w_o", a.w_o);
  };
  auto norm = [&](const std::string& prefix, auto& n) {
    fn(prefix + ".gain", n.gain);
    fn(prefix + ".shift", n.shift);
  };
  auto ffn = [&](const std::string& prefix, auto& f) {
    fn(prefix + ".w1", f.w1);
    fn(prefix + ".b1", f.b1);
    fn(prefix + ".w2", f.w2);
    fn(prefix + ".b2", f.b2);
  };
  fn("embed.token", p.token_embedding);
  fn("embed.enc_position", p.enc_position);
  fn("embed.dec_position", p.dec_position);
  norm("encoder.emb_norm", p.enc_emb_norm);
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    const std::string base = "encoder." + std::to_string(i);
    attn(base + ".self_attn", p.encoder[i].self_attn);
    norm(base + ".attn_norm", p.encoder[i].attn_norm);
    ffn(base + ".ffn", p.encoder[i].ffn);
    norm(base + ".ffn_norm", p.encoder[i].ffn_norm);
  }
  norm("decoder.emb_norm", p.dec_emb_norm);
  for (std::size_t i = 0; i < p.decoder.size(); ++i) {
    const std::string base = "decoder." + std::to_string(i);
    auto& layer = p.decoder[i];
    attn(base + ".self_attn", layer.self_attn);
    norm(base + ".self_norm", layer.self_norm);
    if (layer.cross_attn) attn(base + ".cross_attn", *layer.cross_attn);
    if (layer.cross_norm) norm(base + ".cross_norm", *layer.cross_norm);
    ffn(base + ".ffn", layer.ffn);
    norm(base + ".ffn_norm", layer.ffn_norm);
  }
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = kInitStd * rng.normal();
  return m;
}

AttentionWeights random_attention(int d, Rng& rng) {
  return {normal_matrix(d, d, rng), normal_matrix(d, d, rng), normal_matrix(d, d, rng), normal_matrix(d, d, rng)};
}

LayerNormWeights identity_norm(int d) { return {Matrix::Ones(1, d), Matrix::Zero(1, d)}; }

FeedForwardWeights random_ffn(int d, int d_ff, Rng& rng) {
  return {normal_matrix(d, d_ff, rng), Matrix::Zero(1, d_ff), normal_matrix(d_ff, d, rng), Matrix::Zero(1, d)};
}

}  // namespace

void Parameters::for_each(const std::function<void(const std::string&, Matrix&)>& fn) { visit(*this, fn); }

void Parameters::for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const {
  visit(*this, fn);
}

std::vector<std::string> Parameters::names() const {
  std::vector<std::string> out;
  for_each([&](const std::string& name, const Matrix&) { out.push_back(name); });
  return out;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

Parameters Parameters::zeros_like() const {
  Parameters z = *this;
  z.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

bool Parameters::all_finite() const {
  bool ok = true;
  for_each([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

void for_each_pair(const Parameters& a, const Parameters& b,
                   const std::function<void(const std::string&, const Matrix&, const Matrix&)>& fn) {
  std::vector<std::pair<std::string, const Matrix*>> left;
  a.for_each([&](const std::string& name, const Matrix& m) { left.emplace_back(name, &m); });
  std::size_t i = 0;
  b.for_each([&](const std::string& name, const Matrix& m) {
    if (i >= left.size() || left[i].first != name) throw std::invalid_argument("parameter structure mismatch at " + name);
    if (left[i].second->rows() != m.rows() || left[i].second->cols() != m.cols()) {
      throw std::invalid_argument("parameter shape mismatch at " + name);
    }
    fn(name, *left[i].second, m);
    ++i;
  });
  if (i != left.size()) throw std::invalid_argument("parameter structure mismatch: differing tensor counts");
}

void for_each_pair(Parameters& a, const Parameters& b,
                   const std::function<void(const std::string&, Matrix&, const Matrix&)>& fn) {
  std::vector<std::pair<std::string, Matrix*>> left;
  a.for_each([&](const std::string& name, Matrix& m) { left.emplace_back(name, &m); });
  std::size_t i = 0;
  b.for_each([&](const std::string& name, const Matrix& m) {
    if (i >= left.size() || left[i].first != name) throw std::invalid_argument("parameter structure mismatch at " + name);
    if (left[i].second->rows() != m.rows() || left[i].second->cols() != m.cols()) {
      throw std::invalid_argument("parameter shape mismatch at " + name);
    }
    fn(name, *left[i].second, m);
    ++i;
  });
  if (i != left.size()) throw std::invalid_argument("parameter structure mismatch: differing tensor counts");
}

Parameters init_parameters(const ModelConfig& config, Rng& rng) {
  config.validate();
  const int d = config.d_model;
  Parameters p;
  p.token_embedding = normal_matrix(config.vocab_size, d, rng);
  p.enc_position = normal_matrix(config.max_positions, d, rng);
  p.dec_position = normal_matrix(config.max_positions, d, rng);
  p.enc_emb_norm = identity_norm(d);
  p.dec_emb_norm = identity_norm(d);
  for (int i = 0; i < config.n_enc_layers; ++i) {
    EncoderLayerWeights layer;
    layer.self_attn = random_attention(d, rng);
    layer.attn_norm = identity_norm(d);
    layer.ffn = random_ffn(d, config.d_ff, rng);
    layer.ffn_norm = identity_norm(d);
    p.encoder.push_back(std::move(layer));
  }
  for (int i = 0; i < config.n_dec_layers; ++i) {
    DecoderLayerWeights layer;
    layer.self_attn = random_attention(d, rng);
    layer.self_norm = identity_norm(d);
    if (config.has_cross_attention(i)) {
      layer.cross_attn = random_attention(d, rng);
      if (config.decoder_variant == DecoderVariant::sequential) layer.cross_norm = identity_norm(d);
    }
    layer.ffn = random_ffn(d, config.d_ff, rng);
    layer.ffn_norm = identity_norm(d);
    p.decoder.push_back(std::move(layer));
  }
  return p;
}

void randomize_decoder_self_attention(Parameters& params, Rng& rng) {
  for (auto& layer : params.decoder) {
    const auto d = layer.self_attn.w_q.rows();
    layer.self_attn = random_attention(static_cast<int>(d), rng);
  }
}

Model restrict_cross_attention(const Model& model, std::vector<int> layers) {
  std::sort(layers.begin(), layers.end());
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
  Model out = model;
  out.config.cross_attn_layers = layers;
  out.config.validate();
  for (int l = 0; l < out.config.n_dec_layers; ++l) {
    auto& layer = out.params.decoder[static_cast<std::size_t>(l)];
    if (out.config.has_cross_attention(l)) {
      if (!layer.cross_attn) {
        throw std::invalid_argument("restrict_cross_attention: layer " + std::to_string(l) + " has no cross-attention");
      }
    } else {
      layer.cross_attn.reset();
      layer.cross_norm.reset();
    }
  }
  return out;
}

void check_shapes(const Parameters& params, const ModelConfig& config) {
  Rng rng(0);
  // A freshly initialized set has the reference structure.
  const Parameters reference = init_parameters(config, rng);
  for_each_pair(reference, params, [](const std::string&, const Matrix&, const Matrix&) {});
}

}  // namespace edtk
