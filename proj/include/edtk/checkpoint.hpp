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

// Binary checkpoint: "EDTK", a version byte, a little-endian u64 header
// length, a JSON header (config, vocabulary, parameter index) and raw
// little-endian float32 blobs.

#ifndef EDTK_CHECKPOINT_HPP
#define EDTK_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "edtk/model.hpp"

namespace edtk {

inline constexpr std::uint8_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Serializes to an in-memory image. Values are rounded to float32.
std::string checkpoint_bytes(const Model& model, const nlohmann::json& metadata = nlohmann::json::object());
/// Parses an image; throws CheckpointError and never returns a partial model.
Model model_from_checkpoint_bytes(const std::string& bytes, nlohmann::json* metadata = nullptr);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());
Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

/// Rounds every entry to float32 in place, matching a save/load cycle.
void round_to_float32(Parameters& params);

}  // namespace edtk

#endif  // EDTK_CHECKPOINT_HPP
