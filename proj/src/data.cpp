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

#include "noiseflow/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "binary_io.hpp"

namespace nflow {

namespace {

constexpr std::string_view kMagic = "NFPATCH1";

std::string cell_name(int camera, int iso) {
  return "(camera " + std::to_string(camera) + ", ISO " + std::to_string(iso) + ")";
}

}  // namespace

bool PatchRecord::has_nlf() const { return !std::isnan(nlf_beta1) && !std::isnan(nlf_beta2); }

ConditioningContext PatchRecord::context() const {
  ConditioningContext ctx;
  ctx.clean = clean.cast<double>();
  ctx.iso = static_cast<int>(iso);
  ctx.camera_id = camera_id;
  ctx.clean_is_gain_amplified = clean_is_gain_amplified;
  return ctx;
}

void PatchDataset::validate() const {
  if (!shape.valid()) throw FormatError("dataset shape must be strictly positive");
  if (shape.height > 0xFFFF || shape.width > 0xFFFF || shape.channels > 0xFFFF) {
    throw FormatError("dataset shape exceeds the u16 header fields");
  }
  if (camera_count <= 0 || camera_count > 256) throw FormatError("camera count must be in [1, 256]");
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string where = "record " + std::to_string(r);
    if (rec.clean.shape() != shape || rec.noise.shape() != shape) {
      throw FormatError(where + ": patch shape differs from header shape " + to_string(shape));
    }
    if (rec.camera_id >= camera_count) throw FormatError(where + ": camera id out of range");
    if (std::find(iso_set.begin(), iso_set.end(), static_cast<int>(rec.iso)) == iso_set.end()) {
      throw FormatError(where + ": ISO " + std::to_string(rec.iso) + " not in header ISO set");
    }
    for (float v : rec.clean.values()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw FormatError(where + ": clean value outside [0, 1]");
    }
    for (float v : rec.noise.values()) {
      if (!std::isfinite(v)) throw FormatError(where + ": non-finite noise value");
    }
  }
}

std::vector<char> encode_dataset(const PatchDataset& dataset) {
  dataset.validate();
  detail::ByteWriter w;
  w.reserve(64 + dataset.records.size() * (14 + 8 * dataset.shape.size()));
  w.raw(kMagic);
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(dataset.records.size()));
  w.u16(static_cast<std::uint16_t>(dataset.shape.height));
  w.u16(static_cast<std::uint16_t>(dataset.shape.width));
  w.u16(static_cast<std::uint16_t>(dataset.shape.channels));
  w.u16(static_cast<std::uint16_t>(dataset.iso_set.size()));
  for (int iso : dataset.iso_set) w.u32(static_cast<std::uint32_t>(iso));
  w.u16(static_cast<std::uint16_t>(dataset.camera_count));
  for (const auto& rec : dataset.records) {
    w.u8(rec.camera_id);
    w.u32(rec.iso);
    w.f32(rec.nlf_beta1);
    w.f32(rec.nlf_beta2);
    w.u8(rec.clean_is_gain_amplified ? 1 : 0);
    for (float v : rec.clean.values()) w.f32(v);
    for (float v : rec.noise.values()) w.f32(v);
  }
  return w.bytes();
}

PatchDataset decode_dataset(const std::vector<char>& bytes, const std::string& origin) {
  detail::ByteReader r(bytes, origin);
  if (r.remaining() < kMagic.size() || r.raw(kMagic.size()) != kMagic) {
    throw FormatError(origin + ": not an NFPATCH1 file (bad magic)");
  }
  const std::uint16_t version = r.u16();
  if (version != kDatasetVersion) {
    throw FormatError(origin + ": unsupported dataset version " + std::to_string(version));
  }
  PatchDataset ds;
  const std::uint32_t count = r.u32();
  ds.shape.height = r.u16();
  ds.shape.width = r.u16();
  ds.shape.channels = r.u16();
  if (!ds.shape.valid()) throw FormatError(origin + ": zero patch dimension in header");
  const std::uint16_t iso_count = r.u16();
  for (std::uint16_t i = 0; i < iso_count; ++i) ds.iso_set.push_back(static_cast<int>(r.u32()));
  ds.camera_count = r.u16();

  const std::uint64_t dim = ds.shape.size();
  const std::uint64_t record_bytes = 14 + 8 * dim;
  if (count != 0 && record_bytes * count / count != record_bytes) {
    throw FormatError(origin + ": header shape overflows");
  }
  if (record_bytes * count > r.remaining()) {
    throw FormatError(origin + ": truncated payload (" + std::to_string(count) + " records of " +
                      std::to_string(record_bytes) + " bytes declared, " +
                      std::to_string(r.remaining()) + " bytes present)");
  }
  ds.records.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    PatchRecord rec;
    rec.camera_id = r.u8();
    rec.iso = r.u32();
    rec.nlf_beta1 = r.f32();
    rec.nlf_beta2 = r.f32();
    rec.clean_is_gain_amplified = r.u8() != 0;
    std::vector<float> clean(dim), noise(dim);
    for (auto& v : clean) v = r.f32();
    for (auto& v : noise) v = r.f32();
    rec.clean = PatchF32(ds.shape, std::move(clean));
    rec.noise = PatchF32(ds.shape, std::move(noise));
    ds.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw FormatError(origin + ": trailing bytes after last record");
  ds.validate();
  return ds;
}

void write_dataset(const PatchDataset& dataset, const std::filesystem::path& path) {
  detail::write_file(path, encode_dataset(dataset));
}

PatchDataset read_dataset(const std::filesystem::path& path) {
  return decode_dataset(detail::read_file(path), path.string());
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (!(beta1 >= 0.0) || !std::isfinite(beta1)) throw InputError("beta1 must be >= 0");
  if (!(beta2 > 0.0) || !std::isfinite(beta2)) throw InputError("beta2 must be > 0");
  if (camera_gains.empty()) throw InputError("camera_gains must not be empty");
  if (camera_gains.size() > 256) throw InputError("at most 256 cameras are supported");
  for (double g : camera_gains) {
    if (!(g > 0.0) || !std::isfinite(g)) throw InputError("camera gains must be positive");
  }
  if (iso_set.empty()) throw InputError("iso_set must not be empty");
  for (int iso : iso_set) {
    if (iso <= 0) throw InputError("ISO levels must be positive");
  }
  if (!(iso_gain_scale > 0.0)) throw InputError("iso_gain_scale must be positive");
  if (patches_per_cell == 0) throw InputError("patches_per_cell must be positive");
  if (!shape.valid()) throw InputError("patch shape must be strictly positive");
}

double SyntheticSpec::gamma(int iso, int camera_id) const {
  return camera_gains.at(static_cast<std::size_t>(camera_id)) * static_cast<double>(iso) *
         iso_gain_scale;
}

PatchF32 synthetic_clean_patch(const Shape& shape, RngStream& rng) {
  PatchF32 clean(shape);
  std::vector<double> channel_scale(shape.channels);
  for (double& s : channel_scale) s = rng.uniform(0.7, 1.0);
  if (rng.uniform() < 0.5) {
    // Linear ramp across the patch in a random direction.
    const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double lo = rng.uniform(0.0, 0.2);
    const double hi = rng.uniform(0.8, 1.0);
    double pmin = 1e300, pmax = -1e300;
    for (std::size_t y = 0; y < shape.height; ++y) {
      for (std::size_t x = 0; x < shape.width; ++x) {
        const double p = dx * static_cast<double>(x) + dy * static_cast<double>(y);
        pmin = std::min(pmin, p);
        pmax = std::max(pmax, p);
      }
    }
    const double span = pmax > pmin ? pmax - pmin : 1.0;
    for (std::size_t y = 0; y < shape.height; ++y) {
      for (std::size_t x = 0; x < shape.width; ++x) {
        const double t = (dx * static_cast<double>(x) + dy * static_cast<double>(y) - pmin) / span;
        const double level = lo + (hi - lo) * t;
        for (std::size_t c = 0; c < shape.channels; ++c) {
          clean(y, x, c) = static_cast<float>(std::clamp(level * channel_scale[c], 0.0, 1.0));
        }
      }
    }
  } else {
    // 4x4 grid of constant tiles.
    constexpr std::size_t kTiles = 4;
    std::vector<double> levels(kTiles * kTiles);
    for (double& l : levels) l = rng.uniform();
    for (std::size_t y = 0; y < shape.height; ++y) {
      const std::size_t ty = std::min(kTiles - 1, y * kTiles / shape.height);
      for (std::size_t x = 0; x < shape.width; ++x) {
        const std::size_t tx = std::min(kTiles - 1, x * kTiles / shape.width);
        const double level = levels[ty * kTiles + tx];
        for (std::size_t c = 0; c < shape.channels; ++c) {
          clean(y, x, c) = static_cast<float>(std::clamp(level * channel_scale[c], 0.0, 1.0));
        }
      }
    }
  }
  return clean;
}

PatchDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  PatchDataset ds;
  ds.shape = spec.shape;
  ds.iso_set = spec.iso_set;
  ds.camera_count = static_cast<int>(spec.camera_gains.size());
  std::uint64_t index = 0;
  for (int cam = 0; cam < ds.camera_count; ++cam) {
    for (int iso : spec.iso_set) {
      const double gamma = spec.gamma(iso, cam);
      for (std::size_t k = 0; k < spec.patches_per_cell; ++k, ++index) {
        RngStream rng(spec.seed, index);
        PatchRecord rec;
        rec.camera_id = static_cast<std::uint8_t>(cam);
        rec.iso = static_cast<std::uint32_t>(iso);
        rec.nlf_beta1 = static_cast<float>(gamma * gamma * spec.beta1);
        rec.nlf_beta2 = static_cast<float>(gamma * gamma * spec.beta2);
        rec.clean = synthetic_clean_patch(spec.shape, rng);
        rec.noise = PatchF32(spec.shape);
        const auto clean = rec.clean.values();
        auto noise = rec.noise.values();
        for (std::size_t i = 0; i < noise.size(); ++i) {
          const double stddev = std::sqrt(spec.beta1 * clean[i] + spec.beta2);
          noise[i] = static_cast<float>(gamma * stddev * rng.normal());
        }
        ds.records.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------

DatasetSplit split(const PatchDataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw InputError("train fraction must be in (0, 1]");
  }
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& rec = dataset.records[i];
    cells[{rec.camera_id, static_cast<int>(rec.iso)}].push_back(i);
  }
  if (cells.empty()) throw InputError("cannot split an empty dataset");
  std::vector<bool> in_train(dataset.records.size(), false);
  for (auto& [key, indices] : cells) {
    const std::size_t n = indices.size();
    if (n < 2) {
      throw InputError("cell " + cell_name(key.first, key.second) + " has " + std::to_string(n) +
                       " record(s); need at least 2");
    }
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train >= n) {
      throw InputError("split leaves an empty " + std::string(n_train == 0 ? "train" : "test") +
                       " set for cell " + cell_name(key.first, key.second));
    }
    RngStream rng(seed, static_cast<std::uint64_t>(key.first) << 32 |
                            static_cast<std::uint32_t>(key.second));
    shuffle(indices, rng);
    for (std::size_t k = 0; k < n_train; ++k) in_train[indices[k]] = true;
  }
  DatasetSplit out;
  for (PatchDataset* part : {&out.train, &out.test}) {
    part->shape = dataset.shape;
    part->iso_set = dataset.iso_set;
    part->camera_count = dataset.camera_count;
  }
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    (in_train[i] ? out.train : out.test).records.push_back(dataset.records[i]);
  }
  return out;
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t count, std::size_t batch,
                                                  RngStream& rng) {
  if (batch == 0) throw InputError("batch size must be positive");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch) {
    const std::size_t end = std::min(count, start + batch);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace nflow
