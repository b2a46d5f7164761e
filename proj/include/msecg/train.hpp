// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include <msecg/data.hpp>
#include <msecg/dsp.hpp>
#include <msecg/model.hpp>
#include <msecg/tensor.hpp>

namespace msecg {
namespace train {

struct StageConfig {
  std::int64_t epochs = 0;
  double lr = 0.0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::int64_t batch_size = 64;
  StageConfig stage1{300, 1e-4};
  StageConfig stage2{50, 1e-5};
  AdamConfig adam;
  std::uint64_t seed = 0;
  // Applied per epoch to training inputs when a noise bank is supplied;
  // validation inputs are scored exactly as given (frozen).
  dsp::CorruptParams corrupt;

  void validate() const;  // throws ConfigError
};

/// Adam moments, one vector per parameter tensor in canonical order.
template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> m, v;
  std::int64_t t = 0;
};

template <typename T>
OptimizerState<T> make_optimizer_state(const model::ModelParams<T>& params);

// Mean of squared elementwise differences, recorded on the active tape.
template <typename T>
TensorPtr<T> l2_loss(const TensorPtr<T>& pred, const TensorPtr<T>& target);

// One bias-corrected Adam update over all tensors. Validates every gradient
// first and throws NonFiniteError naming the tensor before touching any
// parameter; t advances by exactly one on success.
template <typename T>
void adam_step(const std::vector<std::pair<std::string, TensorPtr<T>>>& params,
               OptimizerState<T>& state, double lr, const AdamConfig& cfg);

template <typename T>
struct Checkpoint {
  model::ModelConfig config;
  TrainConfig train_config;
  model::ModelParams<T> params;
  OptimizerState<T> opt;
  std::int64_t epoch = -1;
  double val_mse = 0.0;
};

struct EpochLog {
  std::int64_t epoch = 0;  // global index across both stages
  int stage = 1;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_mse = 0.0;
};

template <typename T>
struct TrainResult {
  Checkpoint<T> best;
  std::vector<EpochLog> log;
  // corruption[epoch][segment] for the training split, for audits.
  std::vector<std::vector<dsp::CorruptionRecord>> corruption;
  // Validation MSE of the restored parameters at the start of stage 2
  // (equals best.val_mse when stage 2 runs; copied from best otherwise).
  double stage2_initial_val = 0.0;
};

// Two-stage recipe: stage 1 at stage1.lr tracking validation MSE per epoch
// and keeping the best snapshot (parameters plus optimizer state); stage 2
// restores that snapshot and continues at stage2.lr. Returns the overall
// best-on-validation checkpoint. Training inputs are re-corrupted every
// epoch with seeds derived from (seed, epoch, segment); a null bank
// disables corruption. Throws ConfigError on empty splits.
template <typename T>
TrainResult<T> train(const std::vector<data::SegmentPair>& train_pairs,
                     const std::vector<data::SegmentPair>& val_pairs,
                     const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                     const dsp::NoiseBank* bank);

// Forward pass without recording, double-precision scored against hr_gt.
template <typename T>
double validation_mse(const model::ModelParams<T>& params,
                      const model::ModelConfig& cfg,
                      const std::vector<data::SegmentPair>& pairs);

// Versioned binary container: magic, format version, JSON header (model and
// train config, epoch, metric, tensor table), then parameter values and
// Adam moments as little-endian 32-bit floats. Save -> load -> save is
// byte-identical. Float-precision checkpoints only.
void save_checkpoint(const std::string& path, const Checkpoint<float>& ckpt);
Checkpoint<float> load_checkpoint(const std::string& path);

// Config (de)serialization shared with the command-line front end. Missing
// keys keep defaults; unknown keys raise ConfigError.
nlohmann::json model_config_to_json(const model::ModelConfig& cfg);
model::ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace train
}  // namespace msecg
