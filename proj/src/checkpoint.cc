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

#include "serforge/checkpoint.h"

#include <cstring>
#include <fstream>
#include <iterator>

#include "serforge/error.h"

namespace serforge {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'R', 'F', 'C', 'K', 'P', 'T'};

void PutLe(std::string& out, std::uint64_t v, int bytes) {
  for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint64_t GetLe(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

}  // namespace

void SaveCheckpoint(const std::filesystem::path& path, const ParamStore<float>& store,
                    const nlohmann::json& meta) {
  nlohmann::json m = meta;
  m["version"] = kCheckpointVersion;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : store.entries()) {
    tensors.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"trainable", e.trainable}});
  }
  m["tensors"] = tensors;
  const std::string js = m.dump();

  std::string buf(kMagic, sizeof kMagic);
  PutLe(buf, kCheckpointVersion, 4);
  PutLe(buf, js.size(), 8);
  buf += js;
  for (const auto& e : store.entries()) {
    for (float v : e.value.values()) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      PutLe(buf, u, 4);
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) Fail(ErrorKind::kIo, "cannot write " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) Fail(ErrorKind::kIo, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kCheckpoint, "cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string() + ": ";
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) Fail(ErrorKind::kCheckpoint, where + "bad magic or truncated header");
  const auto version = GetLe(bytes.data() + 8, 4);
  if (version != kCheckpointVersion) {
    Fail(ErrorKind::kCheckpoint, where + "version " + std::to_string(version) + " not supported (expected " +
                                     std::to_string(kCheckpointVersion) + ")");
  }
  const auto js_len = GetLe(bytes.data() + 12, 8);
  if (js_len > bytes.size() - 20) Fail(ErrorKind::kCheckpoint, where + "truncated metadata");
  Checkpoint ck;
  try {
    ck.meta = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(js_len));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kCheckpoint, where + "bad metadata: " + e.what());
  }
  std::size_t off = 20 + js_len;
  try {
    for (const auto& t : ck.meta.at("tensors")) {
      const auto shape = t.at("shape").get<Shape>();
      const std::size_t n = ShapeSize(shape);
      if (bytes.size() - off < 4 * n) Fail(ErrorKind::kCheckpoint, where + "truncated payload at " + t.at("name").get<std::string>());
      std::vector<float> v(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto u = static_cast<std::uint32_t>(GetLe(bytes.data() + off + 4 * i, 4));
        std::memcpy(&v[i], &u, 4);
      }
      off += 4 * n;
      ck.store.Add(t.at("name").get<std::string>(), Tensor<float>(shape, std::move(v)), t.at("trainable").get<bool>());
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kCheckpoint, where + "bad tensor table: " + e.what());
  }
  if (off != bytes.size()) Fail(ErrorKind::kCheckpoint, where + "trailing bytes after payload");
  return ck;
}

void LoadInto(ParamStore<float>& target, const ParamStore<float>& source) {
  for (auto& e : target.entries()) {
    if (!source.Contains(e.name)) Fail(ErrorKind::kCheckpoint, "checkpoint lacks tensor '" + e.name + "'");
    const auto& v = source.value(e.name);
    if (v.shape() != e.value.shape()) {
      Fail(ErrorKind::kShape, "tensor '" + e.name + "' has shape " + ShapeString(v.shape()) +
                                  " in the checkpoint but " + ShapeString(e.value.shape()) + " in the model");
    }
    e.value = v;
  }
  if (source.size() != target.size()) {
    for (const auto& e : source.entries()) {
      if (!target.Contains(e.name)) Fail(ErrorKind::kCheckpoint, "checkpoint tensor '" + e.name + "' is not part of the model");
    }
  }
}

}  // namespace serforge
