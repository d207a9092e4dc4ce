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

// JSON run configuration and synthetic-data specs.

#ifndef NOISEFLOW_CONFIG_HPP_
#define NOISEFLOW_CONFIG_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noiseflow/data.hpp"
#include "noiseflow/evaluation.hpp"
#include "noiseflow/model.hpp"
#include "noiseflow/training.hpp"

namespace nflow {

struct RunConfig {
  std::string arch{kDefaultArchitecture};
  std::size_t hidden_width = 32;
  /// Empty: taken from the training data header.
  std::vector<int> iso_set;
  /// 0: taken from the training data header.
  int cameras = 0;
  TrainConfig train;
  EvalSettings eval;
  std::string train_data;
  std::string test_data;
  std::string output_dir = ".";
};

/// Missing keys keep their defaults; wrong types or invalid values throw
/// InputError.
RunConfig run_config_from_json(const nlohmann::json& json);
nlohmann::json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& json);
nlohmann::json to_json(const SyntheticSpec& spec);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// Model configuration for `config`, filling ISO set and camera count from
/// the dataset header when the config leaves them open.
ModelConfig model_config(const RunConfig& config, const PatchDataset& data);

}  // namespace nflow

#endif  // NOISEFLOW_CONFIG_HPP_
