// SPDX-License-Identifier: Apache-2.0
#include <msecg/train.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <utility>

#include <msecg/errors.hpp>
#include <msecg/metrics.hpp>
#include <msecg/ops.hpp>
#include <msecg/rng.hpp>

namespace msecg {
namespace train {

using nlohmann::json;

namespace {

constexpr std::uint64_t kTagEpoch = 4;
constexpr std::uint64_t kTagSegment = 5;
constexpr char kMagic[8] = {'M', 'S', 'E', 'C', 'G', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
TensorPtr<T> signal_to_tensor(const Signal& s) {
  auto t = Tensor<T>::zeros({s.channels, s.length()});
  for (std::size_t i = 0; i < s.data.size(); ++i)
    t->value[i] = static_cast<T>(s.data[i]);
  return t;
}

template <typename T>
model::ModelParams<T> clone_params(const model::ModelParams<T>& p,
                                   const model::ModelConfig& cfg) {
  auto out = model::init_params<T>(cfg, 0);
  auto src = model::named_tensors(p);
  auto dst = model::named_tensors(out);
  if (src.size() != dst.size())
    throw ContractError("clone_params: tensor table mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].second->shape != dst[i].second->shape)
      throw ContractError("clone_params: shape mismatch at " + src[i].first);
    dst[i].second->value = src[i].second->value;
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (stage1.epochs < 0 || stage2.epochs < 0)
    throw ConfigError("train: epochs must be >= 0");
  if (!(stage1.lr > 0.0) || !(stage2.lr > 0.0))
    throw ConfigError("train: learning rates must be positive");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 > 0.0 && adam.beta2 < 1.0))
    throw ConfigError("train: adam betas must lie in (0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train: adam eps must be positive");
}

template <typename T>
OptimizerState<T> make_optimizer_state(const model::ModelParams<T>& params) {
  OptimizerState<T> st;
  for (const auto& [name, t] : model::named_tensors(params)) {
    st.m.emplace_back(t->value.size(), T(0));
    st.v.emplace_back(t->value.size(), T(0));
  }
  return st;
}

template <typename T>
TensorPtr<T> l2_loss(const TensorPtr<T>& pred, const TensorPtr<T>& target) {
  auto diff = ops::sub(pred, target);
  return ops::mean(ops::mul(diff, diff));
}

template <typename T>
void adam_step(const std::vector<std::pair<std::string, TensorPtr<T>>>& params,
               OptimizerState<T>& state, double lr, const AdamConfig& cfg) {
  if (params.size() != state.m.size() || params.size() != state.v.size())
    throw ContractError("adam_step: state does not match parameter table");
  for (const auto& [name, t] : params) {
    if (t->grad.size() != t->value.size())
      throw ContractError("adam_step: missing gradient for " + name);
    for (T g : t->grad)
      if (!std::isfinite(static_cast<double>(g)))
        throw NonFiniteError("adam_step: non-finite gradient in " + name);
  }
  const std::int64_t t_next = state.t + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_next));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_next));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = *params[i].second;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != tensor.value.size())
      throw ContractError("adam_step: moment size mismatch at " +
                          params[i].first);
    for (std::size_t j = 0; j < tensor.value.size(); ++j) {
      const double g = static_cast<double>(tensor.grad[j]);
      const double mj =
          cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * g;
      const double vj =
          cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      tensor.value[j] = static_cast<T>(static_cast<double>(tensor.value[j]) -
                                       lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
  state.t = t_next;
}

template <typename T>
double validation_mse(const model::ModelParams<T>& params,
                      const model::ModelConfig& cfg,
                      const std::vector<data::SegmentPair>& pairs) {
  if (pairs.empty()) throw ConfigError("validation_mse: empty split");
  double total = 0.0;
  for (const auto& pair : pairs) {
    auto x = signal_to_tensor<T>(pair.lr);
    auto pred = model::forward(x, params, cfg);
    std::vector<double> pd(pred->value.size());
    for (std::size_t i = 0; i < pd.size(); ++i)
      pd[i] = static_cast<double>(pred->value[i]);
    total += metrics::mse(pd, pair.hr_gt.data);
  }
  return total / static_cast<double>(pairs.size());
}

namespace {

template <typename T>
Checkpoint<T> snapshot(const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                       const model::ModelParams<T>& params,
                       const OptimizerState<T>& opt, std::int64_t epoch,
                       double val) {
  Checkpoint<T> c;
  c.config = mcfg;
  c.train_config = tcfg;
  c.params = clone_params(params, mcfg);
  c.opt = opt;
  c.epoch = epoch;
  c.val_mse = val;
  return c;
}

}  // namespace

template <typename T>
TrainResult<T> train(const std::vector<data::SegmentPair>& train_pairs,
                     const std::vector<data::SegmentPair>& val_pairs,
                     const model::ModelConfig& mcfg, const TrainConfig& tcfg,
                     const dsp::NoiseBank* bank) {
  mcfg.validate();
  tcfg.validate();
  if (train_pairs.empty()) throw ConfigError("train: empty training split");
  if (val_pairs.empty()) throw ConfigError("train: empty validation split");

  auto params = model::init_params<T>(mcfg, tcfg.seed);
  auto opt = make_optimizer_state(params);
  auto named = model::named_tensors(params);

  std::vector<TensorPtr<T>> targets;
  targets.reserve(train_pairs.size());
  for (const auto& pair : train_pairs)
    targets.push_back(signal_to_tensor<T>(pair.hr_gt));

  TrainResult<T> result;
  result.best = snapshot(mcfg, tcfg, params, opt, -1,
                         std::numeric_limits<double>::infinity());

  std::int64_t global_epoch = 0;
  const auto run_stage = [&](int stage, const StageConfig& sc) {
    for (std::int64_t e = 0; e < sc.epochs; ++e, ++global_epoch) {
      const std::uint64_t epoch_seed =
          derive_seed(tcfg.seed, static_cast<std::uint64_t>(global_epoch),
                      kTagEpoch);
      std::vector<dsp::CorruptionRecord> epoch_records(train_pairs.size());
      double loss_sum = 0.0;

      for (std::size_t start = 0; start < train_pairs.size();
           start += static_cast<std::size_t>(tcfg.batch_size)) {
        const std::size_t stop =
            std::min(train_pairs.size(),
                     start + static_cast<std::size_t>(tcfg.batch_size));
        const T inv_batch = T(1) / static_cast<T>(stop - start);
        for (const auto& [name, t] : named) t->zero_grad();

        for (std::size_t i = start; i < stop; ++i) {
          Signal input = train_pairs[i].lr;
          if (bank) {
            Rng rng(derive_seed(epoch_seed, static_cast<std::uint64_t>(i),
                                kTagSegment));
            input = dsp::corrupt(input, *bank, tcfg.corrupt, rng,
                                 &epoch_records[i]);
          }
          auto x = signal_to_tensor<T>(input);
          Tape<T> tape;
          auto pred = model::forward(x, params, mcfg);
          auto loss = l2_loss(pred, targets[i]);
          loss_sum += static_cast<double>(loss->item());
          tape.backward(ops::scale(loss, inv_batch));
        }
        adam_step(named, opt, sc.lr, tcfg.adam);
      }

      EpochLog log;
      log.epoch = global_epoch;
      log.stage = stage;
      log.lr = sc.lr;
      log.train_loss = loss_sum / static_cast<double>(train_pairs.size());
      log.val_mse = validation_mse(params, mcfg, val_pairs);
      result.log.push_back(log);
      result.corruption.push_back(std::move(epoch_records));

      if (log.val_mse < result.best.val_mse)
        result.best =
            snapshot(mcfg, tcfg, params, opt, global_epoch, log.val_mse);
    }
  };

  run_stage(1, tcfg.stage1);

  if (tcfg.stage2.epochs > 0) {
    if (result.best.epoch >= 0) {
      params = clone_params(result.best.params, mcfg);
      opt = result.best.opt;
      named = model::named_tensors(params);
    }
    result.stage2_initial_val = validation_mse(params, mcfg, val_pairs);
    run_stage(2, tcfg.stage2);
  } else {
    result.stage2_initial_val = result.best.val_mse;
  }

  if (result.best.epoch < 0) {
    // Zero total epochs: return the initial parameters, scored once.
    const double val = validation_mse(params, mcfg, val_pairs);
    result.best = snapshot(mcfg, tcfg, params, opt, -1, val);
    result.stage2_initial_val = val;
  }
  return result;
}

// ---- checkpoint container ----

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);  // little-endian host assumed, as for rasters
  out.append(b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

json stage_to_json(const StageConfig& s) {
  return json{{"epochs", s.epochs}, {"lr", s.lr}};
}

StageConfig stage_from_json(const json& j, const StageConfig& defaults) {
  StageConfig s = defaults;
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs")
      s.epochs = value.get<std::int64_t>();
    else if (key == "lr")
      s.lr = value.get<double>();
    else
      throw ConfigError("config: unknown stage key '" + key + "'");
  }
  return s;
}

const char* discretize_name(ssm::DiscretizeMode m) {
  return m == ssm::DiscretizeMode::euler ? "euler" : "zoh";
}

const char* scan_name(ssm::ScanMode m) {
  return m == ssm::ScanMode::sequential ? "sequential" : "parallel";
}

}  // namespace

json model_config_to_json(const model::ModelConfig& cfg) {
  return json{{"leads", cfg.leads},
              {"d", cfg.d},
              {"m", cfg.m},
              {"r", cfg.r},
              {"expand", cfg.expand},
              {"d_state", cfg.d_state},
              {"conv_kernel_front", cfg.conv_kernel_front},
              {"conv_kernel_head", cfg.conv_kernel_head},
              {"mamba_conv_kernel", cfg.mamba_conv_kernel},
              {"use_pixel_shuffle", cfg.use_pixel_shuffle},
              {"use_skip_connection", cfg.use_skip_connection},
              {"use_deconv", cfg.use_deconv},
              {"discretize", discretize_name(cfg.discretize)},
              {"scan", scan_name(cfg.scan)},
              {"scan_threads", cfg.scan_threads}};
}

model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "leads")
      cfg.leads = value.get<std::int64_t>();
    else if (key == "d")
      cfg.d = value.get<std::int64_t>();
    else if (key == "m")
      cfg.m = value.get<std::int64_t>();
    else if (key == "r")
      cfg.r = value.get<std::int64_t>();
    else if (key == "expand")
      cfg.expand = value.get<std::int64_t>();
    else if (key == "d_state")
      cfg.d_state = value.get<std::int64_t>();
    else if (key == "conv_kernel_front")
      cfg.conv_kernel_front = value.get<std::int64_t>();
    else if (key == "conv_kernel_head")
      cfg.conv_kernel_head = value.get<std::int64_t>();
    else if (key == "mamba_conv_kernel")
      cfg.mamba_conv_kernel = value.get<std::int64_t>();
    else if (key == "use_pixel_shuffle")
      cfg.use_pixel_shuffle = value.get<bool>();
    else if (key == "use_skip_connection")
      cfg.use_skip_connection = value.get<bool>();
    else if (key == "use_deconv")
      cfg.use_deconv = value.get<bool>();
    else if (key == "discretize") {
      const auto s = value.get<std::string>();
      if (s == "euler")
        cfg.discretize = ssm::DiscretizeMode::euler;
      else if (s == "zoh")
        cfg.discretize = ssm::DiscretizeMode::zoh;
      else
        throw ConfigError("config: unknown discretize mode '" + s + "'");
    } else if (key == "scan") {
      const auto s = value.get<std::string>();
      if (s == "sequential")
        cfg.scan = ssm::ScanMode::sequential;
      else if (s == "parallel")
        cfg.scan = ssm::ScanMode::parallel;
      else
        throw ConfigError("config: unknown scan mode '" + s + "'");
    } else if (key == "scan_threads")
      cfg.scan_threads = value.get<int>();
    else
      throw ConfigError("config: unknown model key '" + key + "'");
  }
  return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
  return json{{"batch_size", cfg.batch_size},
              {"stage1", stage_to_json(cfg.stage1)},
              {"stage2", stage_to_json(cfg.stage2)},
              {"adam", json{{"beta1", cfg.adam.beta1},
                            {"beta2", cfg.adam.beta2},
                            {"eps", cfg.adam.eps}}},
              {"seed", cfg.seed},
              {"corrupt", json{{"p_noise", cfg.corrupt.p_noise},
                               {"snr_lo_db", cfg.corrupt.snr_lo_db},
                               {"snr_hi_db", cfg.corrupt.snr_hi_db}}}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "batch_size")
      cfg.batch_size = value.get<std::int64_t>();
    else if (key == "stage1")
      cfg.stage1 = stage_from_json(value, cfg.stage1);
    else if (key == "stage2")
      cfg.stage2 = stage_from_json(value, cfg.stage2);
    else if (key == "adam") {
      for (const auto& [akey, avalue] : value.items()) {
        if (akey == "beta1")
          cfg.adam.beta1 = avalue.get<double>();
        else if (akey == "beta2")
          cfg.adam.beta2 = avalue.get<double>();
        else if (akey == "eps")
          cfg.adam.eps = avalue.get<double>();
        else
          throw ConfigError("config: unknown adam key '" + akey + "'");
      }
    } else if (key == "seed")
      cfg.seed = value.get<std::uint64_t>();
    else if (key == "corrupt") {
      for (const auto& [ckey, cvalue] : value.items()) {
        if (ckey == "p_noise")
          cfg.corrupt.p_noise = cvalue.get<double>();
        else if (ckey == "snr_lo_db")
          cfg.corrupt.snr_lo_db = cvalue.get<double>();
        else if (ckey == "snr_hi_db")
          cfg.corrupt.snr_hi_db = cvalue.get<double>();
        else
          throw ConfigError("config: unknown corrupt key '" + ckey + "'");
      }
    } else
      throw ConfigError("config: unknown train key '" + key + "'");
  }
  return cfg;
}

void save_checkpoint(const std::string& path, const Checkpoint<float>& ckpt) {
  auto named = model::named_tensors(ckpt.params);
  if (named.size() != ckpt.opt.m.size() || named.size() != ckpt.opt.v.size())
    throw ContractError("save_checkpoint: optimizer state mismatch");

  json header;
  header["model"] = model_config_to_json(ckpt.config);
  header["train"] = train_config_to_json(ckpt.train_config);
  header["epoch"] = ckpt.epoch;
  header["val_mse"] = ckpt.val_mse;
  header["t"] = ckpt.opt.t;
  auto table = json::array();
  for (const auto& [name, t] : named)
    table.push_back(json{{"name", name}, {"shape", t->shape}});
  header["tensors"] = std::move(table);
  const std::string header_str = header.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u64(out, header_str.size());
  out += header_str;
  const auto append_floats = [&out](const std::vector<float>& v) {
    if (!v.empty())
      out.append(reinterpret_cast<const char*>(v.data()), v.size() * 4);
  };
  for (const auto& [name, t] : named) append_floats(t->value);
  for (const auto& m : ckpt.opt.m) append_floats(m);
  for (const auto& v : ckpt.opt.v) append_floats(v);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("save_checkpoint: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("save_checkpoint: short write to " + path);
}

Checkpoint<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open " + path);
  std::string blob((std::istreambuf_iterator<char>(f)), {});

  std::size_t off = 0;
  const auto need = [&](std::size_t n, const char* what) {
    if (blob.size() - off < n)
      throw IoError(std::string("load_checkpoint: truncated file (") + what +
                    ") in " + path);
  };
  need(sizeof(kMagic), "magic");
  if (std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError("load_checkpoint: " + path + " is not a checkpoint");
  off += sizeof(kMagic);
  need(4, "version");
  std::uint32_t version = 0;
  std::memcpy(&version, blob.data() + off, 4);
  off += 4;
  if (version != kVersion)
    throw IoError("load_checkpoint: unsupported format version " +
                  std::to_string(version));
  need(8, "header length");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, blob.data() + off, 8);
  off += 8;
  need(header_len, "header");
  json header;
  try {
    header = json::parse(blob.substr(off, header_len));
  } catch (const json::exception& e) {
    throw IoError(std::string("load_checkpoint: bad header: ") + e.what());
  }
  off += header_len;

  Checkpoint<float> ckpt;
  try {
    ckpt.config = model_config_from_json(header.at("model"));
    ckpt.train_config = train_config_from_json(header.at("train"));
    ckpt.epoch = header.at("epoch").get<std::int64_t>();
    ckpt.val_mse = header.at("val_mse").get<double>();
  } catch (const json::exception& e) {
    throw IoError(std::string("load_checkpoint: incomplete header: ") +
                  e.what());
  }
  ckpt.params = model::init_params<float>(ckpt.config, 0);
  auto named = model::named_tensors(ckpt.params);
  const auto& table = header.at("tensors");
  if (table.size() != named.size())
    throw IoError("load_checkpoint: tensor table size mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (table[i].at("name").get<std::string>() != named[i].first)
      throw IoError("load_checkpoint: unexpected tensor " +
                    table[i].at("name").get<std::string>());
    const auto shape = table[i].at("shape").get<Shape>();
    if (shape != named[i].second->shape)
      throw IoError("load_checkpoint: shape mismatch at " + named[i].first);
  }

  const auto read_floats = [&](std::vector<float>& dst, const char* what) {
    need(dst.size() * 4, what);
    std::memcpy(dst.data(), blob.data() + off, dst.size() * 4);
    off += dst.size() * 4;
  };
  for (auto& [name, t] : named) read_floats(t->value, name.c_str());
  ckpt.opt.t = header.at("t").get<std::int64_t>();
  for (const auto& [name, t] : named) {
    ckpt.opt.m.emplace_back(t->value.size());
    read_floats(ckpt.opt.m.back(), "adam m");
  }
  for (const auto& [name, t] : named) {
    ckpt.opt.v.emplace_back(t->value.size());
    read_floats(ckpt.opt.v.back(), "adam v");
  }
  if (off != blob.size())
    throw IoError("load_checkpoint: trailing bytes in " + path);
  return ckpt;
}

#define MSECG_INSTANTIATE_TRAIN(T)                                           \
  template OptimizerState<T> make_optimizer_state<T>(                        \
      const model::ModelParams<T>&);                                         \
  template TensorPtr<T> l2_loss<T>(const TensorPtr<T>&, const TensorPtr<T>&); \
  template void adam_step<T>(                                                \
      const std::vector<std::pair<std::string, TensorPtr<T>>>&,              \
      OptimizerState<T>&, double, const AdamConfig&);                        \
  template double validation_mse<T>(const model::ModelParams<T>&,            \
                                    const model::ModelConfig&,               \
                                    const std::vector<data::SegmentPair>&);  \
  template TrainResult<T> train<T>(const std::vector<data::SegmentPair>&,    \
                                   const std::vector<data::SegmentPair>&,    \
                                   const model::ModelConfig&,                \
                                   const TrainConfig&,                       \
                                   const dsp::NoiseBank*);

MSECG_INSTANTIATE_TRAIN(float)
MSECG_INSTANTIATE_TRAIN(double)

#undef MSECG_INSTANTIATE_TRAIN

}  // namespace train
}  // namespace msecg
