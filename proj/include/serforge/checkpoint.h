// Copyright 2026 The ser-forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SERFORGE_CHECKPOINT_H_
#define SERFORGE_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "serforge/param_store.h"

namespace serforge {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "SERFCKPT", u32 version, u64 metadata length, metadata JSON
// (caller fields plus names, shapes and trainable flags), then every tensor
// as little-endian float32 in store order.
void SaveCheckpoint(const std::filesystem::path& path, const ParamStore<float>& store,
                    const nlohmann::json& meta);

struct Checkpoint {
  ParamStore<float> store;
  nlohmann::json meta;
};

Checkpoint LoadCheckpoint(const std::filesystem::path& path);

// Copies values into `target`, which must hold the same names and shapes.
// Trainable flags of `target` are kept.
void LoadInto(ParamStore<float>& target, const ParamStore<float>& source);

}  // namespace serforge

#endif  // SERFORGE_CHECKPOINT_H_
