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

#include "edtk/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace edtk {

namespace {

constexpr char kMagic[4] = {'E', 'D', 'T', 'K'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

void put_f32(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace

void round_to_float32(Parameters& params) {
  params.for_each([](const std::string&, Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  });
}

std::string checkpoint_bytes(const Model& model, const nlohmann::json& metadata) {
  model.config.validate();
  check_shapes(model.params, model.config);
  if (model.vocab.size() != model.config.vocab_size) throw CheckpointError("checkpoint: vocabulary size disagrees with config");

  nlohmann::json index = nlohmann::json::array();
  std::string payload;
  model.params.for_each([&](const std::string& name, const Matrix& m) {
    index.push_back({{"name", name}, {"offset", payload.size()}, {"rows", m.rows()}, {"cols", m.cols()}});
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f32(payload, m.data()[i]);
  });
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = model.config;
  header["vocab"] = model.vocab.tokens();
  header["parameters"] = std::move(index);
  header["metadata"] = metadata;
  const std::string text = header.dump();

  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_u64(out, text.size());
  out += text;
  out += payload;
  return out;
}

Model model_from_checkpoint_bytes(const std::string& bytes, nlohmann::json* metadata) {
  if (bytes.size() < 13 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("checkpoint: bad magic");
  const auto version = static_cast<std::uint8_t>(bytes[4]);
  if (version != kCheckpointVersion) throw CheckpointError("checkpoint: unknown format version " + std::to_string(version));
  const std::uint64_t header_len = get_u64(bytes, 5);
  if (header_len > bytes.size() - 13) throw CheckpointError("checkpoint: truncated header");

  nlohmann::json header;
  Model model;
  try {
    header = nlohmann::json::parse(bytes.begin() + 13, bytes.begin() + 13 + static_cast<std::ptrdiff_t>(header_len));
    if (header.at("format_version").get<int>() != kCheckpointVersion) throw CheckpointError("checkpoint: header version mismatch");
    model.config = header.at("config").get<ModelConfig>();
    model.config.validate();
    model.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: corrupt header: ") + e.what());
  }
  if (model.vocab.size() != model.config.vocab_size) throw CheckpointError("checkpoint: vocabulary size disagrees with config");

  struct Entry {
    std::uint64_t offset;
    Eigen::Index rows;
    Eigen::Index cols;
  };
  std::map<std::string, Entry> entries;
  try {
    for (const auto& e : header.at("parameters")) {
      const auto name = e.at("name").get<std::string>();
      if (!entries.emplace(name, Entry{e.at("offset").get<std::uint64_t>(), e.at("rows").get<Eigen::Index>(),
                                       e.at("cols").get<Eigen::Index>()})
               .second) {
        throw CheckpointError("checkpoint: duplicate parameter '" + name + "'");
      }
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: corrupt parameter index: ") + e.what());
  }

  const std::size_t payload_at = 13 + header_len;
  const std::uint64_t payload_size = bytes.size() - payload_at;
  Rng rng(0);
  model.params = init_parameters(model.config, rng).zeros_like();
  std::uint64_t consumed = 0;
  model.params.for_each([&](const std::string& name, Matrix& m) {
    auto it = entries.find(name);
    if (it == entries.end()) throw CheckpointError("checkpoint: missing parameter '" + name + "'");
    const Entry& e = it->second;
    if (e.rows != m.rows() || e.cols != m.cols()) {
      throw CheckpointError("checkpoint: parameter '" + name + "' is " + std::to_string(e.rows) + "x" +
                            std::to_string(e.cols) + ", config expects " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()));
    }
    const std::uint64_t len = static_cast<std::uint64_t>(m.size()) * 4;
    if (e.offset > payload_size || len > payload_size - e.offset) {
      throw CheckpointError("checkpoint: blob for parameter '" + name + "' exceeds the payload (truncated file?)");
    }
    const char* p = bytes.data() + payload_at + e.offset;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_f32(p + 4 * i);
    consumed += len;
    entries.erase(it);
  });
  if (!entries.empty()) throw CheckpointError("checkpoint: unexpected parameter '" + entries.begin()->first + "'");
  if (consumed != payload_size) throw CheckpointError("checkpoint: payload size does not match the parameter index");
  if (!model.params.all_finite()) throw CheckpointError("checkpoint: non-finite parameter values");
  if (metadata) *metadata = header.value("metadata", nlohmann::json::object());
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& metadata) {
  const std::string bytes = checkpoint_bytes(model, metadata);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_checkpoint_bytes(buf.str(), metadata);
}

}  // namespace edtk
