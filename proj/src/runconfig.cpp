// SPDX-License-Identifier: Apache-2.0
#include <msecg/runconfig.hpp>

#include <fstream>

#include <msecg/errors.hpp>

namespace msecg {
namespace cli {

using nlohmann::json;

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (data.records < 1)
    throw ConfigError("config: data.records must be >= 1");
  if (!(data.duration_s > 0.0))
    throw ConfigError("config: data.duration_s must be positive");
  if (!(data.fs > 0.0)) throw ConfigError("config: data.fs must be positive");
  if (data.leads < 1) throw ConfigError("config: data.leads must be >= 1");
  if (data.leads != model.leads)
    throw ConfigError("config: data.leads must match model.leads");
  if (data.bank_entries < 1)
    throw ConfigError("config: data.bank_entries must be >= 1");
  if (!(data.bank_duration_s > 0.0))
    throw ConfigError("config: data.bank_duration_s must be positive");
  if (data.pair.decimation != model.r)
    throw ConfigError("config: data.pair.decimation must match model.r");
}

RunConfig profile_config(const std::string& name) {
  RunConfig cfg;
  if (name == "paper") return cfg;
  if (name == "desk") {
    cfg.model.leads = 2;
    cfg.model.d = 16;
    cfg.model.m = 2;
    cfg.model.d_state = 4;
    cfg.train.batch_size = 4;
    cfg.train.stage1 = {30, 1e-3};
    cfg.train.stage2 = {5, 1e-4};
    cfg.data.records = 12;
    cfg.data.duration_s = 1.0;
    cfg.data.leads = 2;
    cfg.data.bank_duration_s = 10.0;
    return cfg;
  }
  throw ConfigError("config: unknown profile '" + name + "'");
}

namespace {

json corrupt_to_json(const dsp::CorruptParams& c) {
  return json{{"p_noise", c.p_noise},
              {"snr_lo_db", c.snr_lo_db},
              {"snr_hi_db", c.snr_hi_db}};
}

void corrupt_from_json(const json& j, dsp::CorruptParams& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "p_noise")
      c.p_noise = value.get<double>();
    else if (key == "snr_lo_db")
      c.snr_lo_db = value.get<double>();
    else if (key == "snr_hi_db")
      c.snr_hi_db = value.get<double>();
    else
      throw ConfigError("config: unknown corrupt key '" + key + "'");
  }
}

json pair_to_json(const data::PairConfig& p) {
  return json{{"bp_order", p.bp_order},
              {"bp_lo_hz", p.bp_lo_hz},
              {"bp_hi_hz", p.bp_hi_hz},
              {"decimation", p.decimation},
              {"corrupt", corrupt_to_json(p.corrupt)}};
}

void pair_from_json(const json& j, data::PairConfig& p) {
  for (const auto& [key, value] : j.items()) {
    if (key == "bp_order")
      p.bp_order = value.get<int>();
    else if (key == "bp_lo_hz")
      p.bp_lo_hz = value.get<double>();
    else if (key == "bp_hi_hz")
      p.bp_hi_hz = value.get<double>();
    else if (key == "decimation")
      p.decimation = value.get<std::int64_t>();
    else if (key == "corrupt")
      corrupt_from_json(value, p.corrupt);
    else
      throw ConfigError("config: unknown pair key '" + key + "'");
  }
}

json data_to_json(const DataConfig& d) {
  return json{{"records", d.records},
              {"duration_s", d.duration_s},
              {"fs", d.fs},
              {"leads", d.leads},
              {"bank_entries", d.bank_entries},
              {"bank_duration_s", d.bank_duration_s},
              {"pair", pair_to_json(d.pair)}};
}

void data_from_json(const json& j, DataConfig& d) {
  for (const auto& [key, value] : j.items()) {
    if (key == "records")
      d.records = value.get<std::int64_t>();
    else if (key == "duration_s")
      d.duration_s = value.get<double>();
    else if (key == "fs")
      d.fs = value.get<double>();
    else if (key == "leads")
      d.leads = value.get<std::int64_t>();
    else if (key == "bank_entries")
      d.bank_entries = value.get<std::int64_t>();
    else if (key == "bank_duration_s")
      d.bank_duration_s = value.get<double>();
    else if (key == "pair")
      pair_from_json(value, d.pair);
    else
      throw ConfigError("config: unknown data key '" + key + "'");
  }
}

}  // namespace

json run_config_to_json(const RunConfig& cfg) {
  return json{{"seed", cfg.seed},
              {"model", train::model_config_to_json(cfg.model)},
              {"train", train::train_config_to_json(cfg.train)},
              {"data", data_to_json(cfg.data)}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "seed")
      cfg.seed = value.get<std::uint64_t>();
    else if (key == "model")
      cfg.model = train::model_config_from_json(value);
    else if (key == "train")
      cfg.train = train::train_config_from_json(value);
    else if (key == "data")
      data_from_json(value, cfg.data);
    else
      throw ConfigError("config: unknown key '" + key + "'");
  }
  return cfg;
}

RunConfig merge_config_file(const RunConfig& base, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot read '" + path + "'");
  json patch;
  try {
    in >> patch;
  } catch (const json::exception& e) {
    throw IoError("config: parse error in '" + path + "': " + e.what());
  }
  if (!patch.is_object())
    throw ConfigError("config: '" + path + "' must hold a JSON object");
  json merged = run_config_to_json(base);
  merged.update(patch, /*merge_objects=*/true);
  return run_config_from_json(merged);
}

}  // namespace cli
}  // namespace msecg
