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

#include "noiseflow/config.hpp"

#include <fstream>

namespace nflow {

namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config key '") + key + "': " + e.what());
  }
}

const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw InputError(std::string("config key '") + key + "' must be an object");
  return j.at(key);
}

}  // namespace

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": invalid JSON: " + e.what());
  }
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("run config must be a JSON object");
  RunConfig c;
  read_key(j, "arch", c.arch);
  read_key(j, "hidden_width", c.hidden_width);
  read_key(j, "iso_set", c.iso_set);
  read_key(j, "cameras", c.cameras);
  read_key(j, "batch_size", c.train.batch_size);
  read_key(j, "epochs", c.train.epochs);
  read_key(j, "seed", c.train.seed);
  read_key(j, "test_interval", c.train.test_interval);
  const auto& opt = section(j, "optimizer");
  read_key(opt, "lr", c.train.adam.lr);
  read_key(opt, "beta1", c.train.adam.beta1);
  read_key(opt, "beta2", c.train.adam.beta2);
  read_key(opt, "eps", c.train.adam.eps);
  read_key(opt, "clip", c.train.adam.clip);
  read_key(opt, "lr_decay", c.train.lr_decay);
  read_key(opt, "flow_step_lr_scale", c.train.flow_step_lr_scale);
  const auto& ev = section(j, "eval");
  read_key(ev, "histogram_range", c.eval.range);
  read_key(ev, "histogram_bins", c.eval.bins);
  read_key(ev, "kl_epsilon", c.eval.epsilon);
  read_key(ev, "samples_per_record", c.eval.samples_per_record);
  c.eval.seed = c.train.seed;
  read_key(ev, "seed", c.eval.seed);
  const auto& data = section(j, "data");
  read_key(data, "train", c.train_data);
  read_key(data, "test", c.test_data);
  read_key(j, "output_dir", c.output_dir);

  ArchitectureSpec::parse(c.arch);
  if (c.hidden_width == 0) throw InputError("hidden_width must be positive");
  if (c.train.batch_size == 0) throw InputError("batch_size must be positive");
  if (!(c.train.adam.lr > 0.0)) throw InputError("optimizer.lr must be positive");
  if (!(c.train.adam.beta1 >= 0.0 && c.train.adam.beta1 < 1.0) ||
      !(c.train.adam.beta2 >= 0.0 && c.train.adam.beta2 < 1.0)) {
    throw InputError("optimizer betas must be in [0, 1)");
  }
  if (!(c.train.adam.eps > 0.0)) throw InputError("optimizer.eps must be positive");
  if (!(c.train.lr_decay > 0.0)) throw InputError("optimizer.lr_decay must be positive");
  if (!(c.train.flow_step_lr_scale > 0.0)) {
    throw InputError("optimizer.flow_step_lr_scale must be positive");
  }
  if (!(c.eval.range > 0.0) || c.eval.bins < 2) throw InputError("invalid histogram settings");
  if (c.eval.samples_per_record == 0) throw InputError("samples_per_record must be positive");
  if (c.cameras < 0) throw InputError("cameras must be >= 0");
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  return {
      {"arch", c.arch},
      {"hidden_width", c.hidden_width},
      {"iso_set", c.iso_set},
      {"cameras", c.cameras},
      {"batch_size", c.train.batch_size},
      {"epochs", c.train.epochs},
      {"seed", c.train.seed},
      {"test_interval", c.train.test_interval},
      {"optimizer",
       {{"lr", c.train.adam.lr},
        {"beta1", c.train.adam.beta1},
        {"beta2", c.train.adam.beta2},
        {"eps", c.train.adam.eps},
        {"clip", c.train.adam.clip},
        {"lr_decay", c.train.lr_decay},
        {"flow_step_lr_scale", c.train.flow_step_lr_scale}}},
      {"eval",
       {{"histogram_range", c.eval.range},
        {"histogram_bins", c.eval.bins},
        {"kl_epsilon", c.eval.epsilon},
        {"samples_per_record", c.eval.samples_per_record},
        {"seed", c.eval.seed}}},
      {"data", {{"train", c.train_data}, {"test", c.test_data}}},
      {"output_dir", c.output_dir},
  };
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_json_file(path));
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("synthetic spec must be a JSON object");
  SyntheticSpec s;
  read_key(j, "beta1", s.beta1);
  read_key(j, "beta2", s.beta2);
  read_key(j, "camera_gains", s.camera_gains);
  read_key(j, "iso_set", s.iso_set);
  read_key(j, "iso_gain_scale", s.iso_gain_scale);
  read_key(j, "patches_per_cell", s.patches_per_cell);
  read_key(j, "height", s.shape.height);
  read_key(j, "width", s.shape.width);
  read_key(j, "channels", s.shape.channels);
  read_key(j, "seed", s.seed);
  s.validate();
  return s;
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"beta1", s.beta1},
          {"beta2", s.beta2},
          {"camera_gains", s.camera_gains},
          {"iso_set", s.iso_set},
          {"iso_gain_scale", s.iso_gain_scale},
          {"patches_per_cell", s.patches_per_cell},
          {"height", s.shape.height},
          {"width", s.shape.width},
          {"channels", s.shape.channels},
          {"seed", s.seed}};
}

ModelConfig model_config(const RunConfig& config, const PatchDataset& data) {
  ModelConfig m;
  m.arch = ArchitectureSpec::parse(config.arch);
  m.hidden_width = config.hidden_width;
  m.channels = data.shape.channels;
  m.iso_set = config.iso_set.empty() ? data.iso_set : config.iso_set;
  m.camera_count = config.cameras > 0 ? config.cameras : data.camera_count;
  return m;
}

}  // namespace nflow
