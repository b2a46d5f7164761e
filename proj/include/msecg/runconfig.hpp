// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include <msecg/data.hpp>
#include <msecg/model.hpp>
#include <msecg/train.hpp>

namespace msecg {
namespace cli {

/// Dataset synthesis and pair-building knobs for the prepare stage. Pairs
/// are materialized clean by default (p_noise 0); training-time corruption
/// is governed separately by TrainConfig::corrupt.
struct DataConfig {
  std::int64_t records = 64;
  double duration_s = 10.0;
  double fs = 500.0;
  std::int64_t leads = 12;
  std::int64_t bank_entries = 4;
  double bank_duration_s = 30.0;
  data::PairConfig pair;

  DataConfig() { pair.corrupt.p_noise = 0.0; }
};

/// Fully resolved run configuration: one master seed plus the per-module
/// configs. `seed` drives data synthesis and pair building; training draws
/// from `train.seed`. The --seed flag sets both.
struct RunConfig {
  std::uint64_t seed = 1;
  model::ModelConfig model;
  train::TrainConfig train;
  DataConfig data;

  void validate() const;  // throws ConfigError
};

// Named presets. "paper" is the full-scale default; "desk" is a small model
// and dataset sized so train/eval complete in seconds. Unknown name throws
// ConfigError.
RunConfig profile_config(const std::string& name);

nlohmann::json run_config_to_json(const RunConfig& cfg);

// Strict parse of a full config object; unknown keys throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

// Reads a JSON file and merges it recursively onto `base`: keys present in
// the file override, absent keys keep the base value. Throws IoError on
// unreadable files, ConfigError on unknown keys.
RunConfig merge_config_file(const RunConfig& base, const std::string& path);

}  // namespace cli
}  // namespace msecg
