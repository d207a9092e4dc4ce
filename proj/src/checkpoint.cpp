// Copyright 2026 The NoiseFlow-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>

#include "binary_io.hpp"
#include "noiseflow/model.hpp"

namespace nflow {

namespace detail {

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace detail

namespace {

constexpr std::string_view kMagic{"NFLOW1\0", 7};

}  // namespace

void save(const FlowModel& model, const std::filesystem::path& path,
          const nlohmann::json& metadata) {
  const ModelConfig& cfg = model.config();
  detail::ByteWriter w;
  w.raw(kMagic);
  w.u16(kCheckpointVersion);
  const std::string arch = cfg.arch.render();
  w.u32(static_cast<std::uint32_t>(arch.size()));
  w.raw(arch);
  w.u32(static_cast<std::uint32_t>(cfg.iso_set.size()));
  for (int iso : cfg.iso_set) w.u32(static_cast<std::uint32_t>(iso));
  w.u32(static_cast<std::uint32_t>(cfg.camera_count));
  w.u32(static_cast<std::uint32_t>(cfg.hidden_width));
  w.u32(static_cast<std::uint32_t>(cfg.channels));
  const std::string meta = metadata.dump();
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.raw(meta);
  const ParamStore& params = model.params();
  w.u32(static_cast<std::uint32_t>(params.entry_count()));
  for (const auto& entry : params.entries()) {
    w.u32(static_cast<std::uint32_t>(entry.name.size()));
    w.raw(entry.name);
    w.u64(entry.size());
    for (double v : entry.value) w.f64(v);
  }
  detail::write_file(path, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::vector<char> bytes = detail::read_file(path);
  detail::ByteReader r(bytes, path.string());
  if (r.remaining() < kMagic.size() || r.raw(kMagic.size()) != kMagic) {
    throw FormatError(path.string() + ": not an NFLOW1 checkpoint (bad magic)");
  }
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig cfg;
  cfg.arch = ArchitectureSpec::parse(r.raw(r.u32()));
  const std::uint32_t iso_count = r.u32();
  r.need(std::size_t{iso_count} * 4);
  cfg.iso_set.clear();
  for (std::uint32_t i = 0; i < iso_count; ++i) cfg.iso_set.push_back(static_cast<int>(r.u32()));
  cfg.camera_count = static_cast<int>(r.u32());
  cfg.hidden_width = r.u32();
  cfg.channels = r.u32();
  nlohmann::json metadata;
  try {
    metadata = nlohmann::json::parse(r.raw(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": corrupt metadata block: " + e.what());
  }

  RngStream scratch(0);
  FlowModel model = FlowModel::build(cfg, scratch);
  ParamStore& params = model.params();
  const std::uint32_t blocks = r.u32();
  if (blocks != params.entry_count()) {
    throw FormatError(path.string() + ": expected " + std::to_string(params.entry_count()) +
                      " parameter blocks, found " + std::to_string(blocks));
  }
  for (std::uint32_t b = 0; b < blocks; ++b) {
    const std::string name = r.raw(r.u32());
    const auto index = params.find(name);
    if (!index) throw FormatError(path.string() + ": unexpected parameter block " + name);
    auto& entry = params[*index];
    const std::uint64_t count = r.u64();
    if (count != entry.size()) {
      throw FormatError(path.string() + ": parameter block " + name + " has " +
                        std::to_string(count) + " values, expected " + std::to_string(entry.size()));
    }
    r.need(count * 8);
    for (auto& v : entry.value) v = r.f64();
  }
  if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes after parameters");
  return {std::move(model), std::move(metadata)};
}

FlowModel load(const std::filesystem::path& path) { return std::move(load_checkpoint(path).model); }

FlowModel load(const std::filesystem::path& path, const std::vector<int>& expected_iso_set) {
  FlowModel model = load(path);
  if (model.config().iso_set != expected_iso_set) {
    auto fmt = [](const std::vector<int>& v) {
      std::string s = "{";
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s + "}";
    };
    throw InputError(path.string() + ": checkpoint ISO set " + fmt(model.config().iso_set) +
                     " does not match configured ISO set " + fmt(expected_iso_set));
  }
  return model;
}

}  // namespace nflow
