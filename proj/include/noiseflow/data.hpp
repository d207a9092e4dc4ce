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

// Packed patch datasets (NFPATCH1), stratified splitting, minibatching and the
// synthetic heteroscedastic multi-camera noise generator.
//
// NFPATCH1 layout, all little-endian:
//   magic "NFPATCH1" (8 bytes), u16 version, u32 record count,
//   u16 H, u16 W, u16 C, u16 ISO count, u32 ISO levels..., u16 camera count
//   then per record:
//   u8 camera_id, u32 iso, f32 nlf_beta1, f32 nlf_beta2 (NaN when absent),
//   u8 clean_is_gain_amplified, f32 clean[H*W*C], f32 noise[H*W*C] (HWC order)

#ifndef NOISEFLOW_DATA_HPP_
#define NOISEFLOW_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "noiseflow/layers.hpp"
#include "noiseflow/numerics.hpp"

namespace nflow {

inline constexpr std::uint16_t kDatasetVersion = 1;

struct PatchRecord {
  std::uint8_t camera_id = 0;
  std::uint32_t iso = 0;
  float nlf_beta1 = std::numeric_limits<float>::quiet_NaN();
  float nlf_beta2 = std::numeric_limits<float>::quiet_NaN();
  bool clean_is_gain_amplified = false;
  PatchF32 clean;
  PatchF32 noise;

  bool has_nlf() const;
  /// 64-bit conditioning context for the flow.
  ConditioningContext context() const;
  Patch noise_f64() const { return noise.cast<double>(); }
};

struct PatchDataset {
  Shape shape{32, 32, 4};
  std::vector<int> iso_set;
  int camera_count = 0;
  std::vector<PatchRecord> records;

  std::size_t size() const { return records.size(); }
  /// Throws FormatError on shape, ISO, camera or clean-range violations.
  void validate() const;
};

std::vector<char> encode_dataset(const PatchDataset& dataset);
PatchDataset decode_dataset(const std::vector<char>& bytes, const std::string& origin = "dataset");
void write_dataset(const PatchDataset& dataset, const std::filesystem::path& path);
PatchDataset read_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

/// Ground-truth noise law: noise = gamma * z with z ~ N(0, beta1 * I + beta2)
/// and gamma(ISO, m) = camera_gains[m] * ISO * iso_gain_scale.
struct SyntheticSpec {
  double beta1 = 0.02;
  double beta2 = 1e-4;
  std::vector<double> camera_gains = {0.8, 1.0, 1.25};
  std::vector<int> iso_set = {100, 400, 800, 1600};
  double iso_gain_scale = 1.0 / 1600.0;
  std::size_t patches_per_cell = 10;
  Shape shape{32, 32, 4};
  std::uint64_t seed = 0;

  /// Throws InputError describing the first invalid field.
  void validate() const;
  double gamma(int iso, int camera_id) const;
};

/// Records are ordered camera-major, then ISO, then patch index. Each record
/// carries its exact effective NLF (gamma^2 beta1, gamma^2 beta2).
PatchDataset generate_synthetic(const SyntheticSpec& spec);

/// Smooth ramps or constant tiles with values in [0, 1].
PatchF32 synthetic_clean_patch(const Shape& shape, RngStream& rng);

struct DatasetSplit {
  PatchDataset train;
  PatchDataset test;
};

/// Stratified by (camera, ISO): each cell contributes round(fraction * n)
/// records to train and the rest to test. Cells with fewer than two records,
/// or that would leave either side empty, raise InputError.
DatasetSplit split(const PatchDataset& dataset, double train_fraction, std::uint64_t seed);

/// A fresh seeded permutation of [0, count) cut into batches of `batch`
/// (the last batch may be short).
std::vector<std::vector<std::size_t>> minibatches(std::size_t count, std::size_t batch,
                                                  RngStream& rng);

}  // namespace nflow

#endif  // NOISEFLOW_DATA_HPP_
