// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <msecg/data.hpp>
#include <msecg/errors.hpp>
#include <msecg/metrics.hpp>
#include <msecg/model.hpp>
#include <msecg/ops.hpp>
#include <msecg/rng.hpp>
#include <msecg/train.hpp>

namespace fs = std::filesystem;
using msecg::Rng;
using msecg::Tape;
using msecg::Tensor;
using msecg::TensorPtr;
namespace data = msecg::data;
namespace dsp = msecg::dsp;
namespace model = msecg::model;
namespace ops = msecg::ops;
namespace train = msecg::train;

namespace {

model::ModelConfig tiny_model() {
  model::ModelConfig cfg;
  cfg.leads = 2;
  cfg.d = 8;
  cfg.m = 1;
  cfg.r = 10;
  cfg.d_state = 4;
  cfg.conv_kernel_front = 3;
  cfg.conv_kernel_head = 3;
  cfg.mamba_conv_kernel = 2;
  return cfg;
}

std::vector<data::SegmentPair> tiny_pairs(std::uint64_t seed, int count,
                                          double duration_s) {
  auto records = data::synth_records(seed, count, duration_s, 500.0, 2);
  data::PairConfig cfg;
  cfg.corrupt.p_noise = 0.0;
  dsp::NoiseBank empty;
  return data::make_pairs(records, cfg, empty, seed);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Scalar parameter wrapped in a one-element table for adam_step.
std::vector<std::pair<std::string, TensorPtr<double>>> scalar_param(
    TensorPtr<double>& p, double value) {
  p = Tensor<double>::scalar(value, true);
  p->ensure_grad();
  return {{"theta", p}};
}

}  // namespace

std::string fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

TEST_CASE("l2 loss matches its closed forms and the metrics module") {
  auto t = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto same = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(train::l2_loss(same, t)->item() == 0.0);

  auto shifted = Tensor<double>::from({2, 3}, {3, 4, 5, 6, 7, 8});
  CHECK(train::l2_loss(shifted, t)->item() == doctest::Approx(4.0).epsilon(1e-15));

  Rng rng(1);
  std::vector<double> a(24), b(24);
  for (auto& v : a) v = rng.uniform(-1.0, 1.0);
  for (auto& v : b) v = rng.uniform(-1.0, 1.0);
  auto ta = Tensor<double>::from({4, 6}, std::vector<double>(a));
  auto tb = Tensor<double>::from({4, 6}, std::vector<double>(b));
  CHECK(train::l2_loss(ta, tb)->item() ==
        doctest::Approx(msecg::metrics::mse(a, b)).epsilon(1e-15));

  auto wrong = Tensor<double>::zeros({3, 2});
  CHECK_THROWS_AS(train::l2_loss(wrong, t), msecg::DimensionError);
}

TEST_CASE("adam leaves parameters alone on zero gradient but advances t") {
  TensorPtr<double> p;
  auto named = scalar_param(p, 1.5);
  auto st = train::OptimizerState<double>{};
  st.m.emplace_back(1, 0.0);
  st.v.emplace_back(1, 0.0);
  train::AdamConfig cfg;
  train::adam_step(named, st, 1e-3, cfg);
  CHECK(p->value[0] == 1.5);
  CHECK(st.t == 1);
}

TEST_CASE("first adam step moves by minus lr times the gradient sign") {
  for (double g : {0.7, -0.02}) {
    TensorPtr<double> p;
    auto named = scalar_param(p, 0.0);
    p->grad[0] = g;
    train::OptimizerState<double> st;
    st.m.emplace_back(1, 0.0);
    st.v.emplace_back(1, 0.0);
    train::AdamConfig cfg;
    const double lr = 1e-3;
    train::adam_step(named, st, lr, cfg);
    // Bias-corrected first step: -lr * g / (|g| + eps).
    const double want = -lr * g / (std::abs(g) + cfg.eps);
    CHECK(p->value[0] == doctest::Approx(want).epsilon(1e-12));
    CHECK(std::abs(p->value[0] + lr * (g > 0 ? 1.0 : -1.0)) < lr * 1e-6);
  }
}

TEST_CASE("two adam steps match hand-computed arithmetic") {
  TensorPtr<double> p;
  auto named = scalar_param(p, 2.0);
  train::OptimizerState<double> st;
  st.m.emplace_back(1, 0.0);
  st.v.emplace_back(1, 0.0);
  train::AdamConfig cfg;
  const double lr = 0.01;

  // Hand computation with g1 = 1.0, g2 = 0.5.
  double m = 0.0, v = 0.0, theta = 2.0;
  const double g1 = 1.0, g2 = 0.5;
  m = 0.9 * m + 0.1 * g1;
  v = 0.999 * v + 0.001 * g1 * g1;
  theta -= lr * (m / (1 - 0.9)) / (std::sqrt(v / (1 - 0.999)) + cfg.eps);

  p->grad[0] = g1;
  train::adam_step(named, st, lr, cfg);
  CHECK(p->value[0] == doctest::Approx(theta).epsilon(1e-12));

  m = 0.9 * m + 0.1 * g2;
  v = 0.999 * v + 0.001 * g2 * g2;
  theta -= lr * (m / (1 - 0.9 * 0.9)) /
           (std::sqrt(v / (1 - 0.999 * 0.999)) + cfg.eps);

  p->grad[0] = g2;
  train::adam_step(named, st, lr, cfg);
  CHECK(p->value[0] == doctest::Approx(theta).epsilon(1e-12));
  CHECK(st.t == 2);
}

TEST_CASE("adam is nearly invariant to positive loss scaling") {
  for (double c : {0.1, 10.0}) {
    TensorPtr<double> p1, p2;
    auto n1 = scalar_param(p1, 1.0);
    auto n2 = scalar_param(p2, 1.0);
    const double g = 0.37;
    p1->grad[0] = g;
    p2->grad[0] = c * g;  // scaled loss scales the gradient
    train::OptimizerState<double> s1, s2;
    s1.m.emplace_back(1, 0.0);
    s1.v.emplace_back(1, 0.0);
    s2.m.emplace_back(1, 0.0);
    s2.v.emplace_back(1, 0.0);
    train::AdamConfig cfg;
    const double lr = 1e-3;
    train::adam_step(n1, s1, lr, cfg);
    train::adam_step(n2, s2, lr, cfg);
    CHECK(std::abs(p1->value[0] - p2->value[0]) < lr * 1e-5);
  }
}

TEST_CASE("adam rejects non-finite gradients without touching parameters") {
  TensorPtr<double> p;
  auto named = scalar_param(p, 3.0);
  p->grad[0] = std::numeric_limits<double>::quiet_NaN();
  train::OptimizerState<double> st;
  st.m.emplace_back(1, 0.0);
  st.v.emplace_back(1, 0.0);
  train::AdamConfig cfg;
  CHECK_THROWS_AS(train::adam_step(named, st, 1e-3, cfg), msecg::NonFiniteError);
  CHECK(p->value[0] == 3.0);
  CHECK(st.t == 0);
}

TEST_CASE("training config validation rejects bad settings") {
  train::TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), msecg::ConfigError);
  cfg = train::TrainConfig{};
  cfg.stage1.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), msecg::ConfigError);
  cfg = train::TrainConfig{};
  cfg.stage2.epochs = -1;
  CHECK_THROWS_AS(cfg.validate(), msecg::ConfigError);
  cfg = train::TrainConfig{};
  cfg.adam.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), msecg::ConfigError);

  // Empty splits are configuration errors.
  auto pairs = tiny_pairs(1, 1, 0.4);
  train::TrainConfig ok;
  ok.stage1 = {1, 1e-4};
  ok.stage2 = {0, 1e-5};
  CHECK_THROWS_AS(
      train::train<float>({}, pairs, tiny_model(), ok, nullptr),
      msecg::ConfigError);
  CHECK_THROWS_AS(
      train::train<float>(pairs, {}, tiny_model(), ok, nullptr),
      msecg::ConfigError);
}

TEST_CASE("tiny model memorizes four segments") {
  auto pairs = tiny_pairs(21, 4, 1.0);
  train::TrainConfig tcfg;
  tcfg.seed = 9;
  tcfg.batch_size = 4;
  tcfg.stage1 = {100, 5e-3};
  tcfg.stage2 = {0, 1e-5};
  auto cfg = tiny_model();

  auto result = train::train<float>(pairs, pairs, cfg, tcfg, nullptr);
  REQUIRE(result.log.size() == 100);
  const double initial = result.log.front().train_loss;
  const double final_loss = result.log.back().train_loss;
  CHECK(final_loss < 0.01 * initial);

  // Validation gating: the returned checkpoint dominates every epoch seen.
  for (const auto& e : result.log)
    CHECK(result.best.val_mse <= e.val_mse + 1e-15);

  // The best checkpoint's stored value is reproducible from its parameters.
  const double recomputed =
      train::validation_mse(result.best.params, cfg, pairs);
  CHECK(recomputed == doctest::Approx(result.best.val_mse).epsilon(1e-12));
}

TEST_CASE("training is bit-exact reproducible under a fixed seed") {
  auto pairs = tiny_pairs(33, 2, 0.6);
  auto bank = data::make_noise_bank(5, 1, 2.0, 50.0);
  train::TrainConfig tcfg;
  tcfg.seed = 4;
  tcfg.batch_size = 2;
  tcfg.stage1 = {3, 1e-3};
  tcfg.stage2 = {2, 1e-4};
  tcfg.corrupt.p_noise = 1.0;
  auto cfg = tiny_model();

  auto r1 = train::train<float>(pairs, pairs, cfg, tcfg, &bank);
  auto r2 = train::train<float>(pairs, pairs, cfg, tcfg, &bank);

  auto n1 = model::named_tensors(r1.best.params);
  auto n2 = model::named_tensors(r2.best.params);
  REQUIRE(n1.size() == n2.size());
  for (std::size_t i = 0; i < n1.size(); ++i)
    for (std::size_t j = 0; j < n1[i].second->value.size(); ++j)
      CHECK(n1[i].second->value[j] == n2[i].second->value[j]);
  CHECK(r1.best.val_mse == r2.best.val_mse);
  CHECK(r1.best.epoch == r2.best.epoch);

  // Corruption draws repeat exactly across reruns...
  REQUIRE(r1.corruption.size() == r2.corruption.size());
  for (std::size_t e = 0; e < r1.corruption.size(); ++e)
    for (std::size_t i = 0; i < r1.corruption[e].size(); ++i) {
      CHECK(r1.corruption[e][i].snr_db == r2.corruption[e][i].snr_db);
      CHECK(r1.corruption[e][i].offset == r2.corruption[e][i].offset);
    }
  // ...but differ between epochs.
  bool across_epochs_differ = false;
  for (std::size_t i = 0; i < r1.corruption[0].size(); ++i)
    if (r1.corruption[0][i].snr_db != r1.corruption[1][i].snr_db)
      across_epochs_differ = true;
  CHECK(across_epochs_differ);
}

TEST_CASE("stage two resumes from the stage-one best snapshot") {
  auto pairs = tiny_pairs(55, 2, 0.6);
  train::TrainConfig tcfg;
  tcfg.seed = 12;
  tcfg.batch_size = 2;
  tcfg.stage1 = {4, 2e-3};
  tcfg.stage2 = {2, 2e-4};
  auto cfg = tiny_model();

  auto result = train::train<float>(pairs, pairs, cfg, tcfg, nullptr);
  double stage1_best = std::numeric_limits<double>::infinity();
  for (const auto& e : result.log)
    if (e.stage == 1) stage1_best = std::min(stage1_best, e.val_mse);
  CHECK(result.stage2_initial_val <= stage1_best + 1e-12);

  int stage2_epochs = 0;
  for (const auto& e : result.log)
    if (e.stage == 2) {
      ++stage2_epochs;
      CHECK(e.lr == 2e-4);
    }
  CHECK(stage2_epochs == 2);
}

TEST_CASE("checkpoints round trip bit-exactly through disk") {
  const std::string dir = fresh_dir("train_test_ckpt");
  auto pairs = tiny_pairs(77, 2, 0.6);
  train::TrainConfig tcfg;
  tcfg.seed = 3;
  tcfg.batch_size = 2;
  tcfg.stage1 = {2, 1e-3};
  tcfg.stage2 = {0, 1e-5};
  auto cfg = tiny_model();
  auto result = train::train<float>(pairs, pairs, cfg, tcfg, nullptr);

  const std::string p1 = dir + "/best.ckpt";
  const std::string p2 = dir + "/best2.ckpt";
  train::save_checkpoint(p1, result.best);
  auto loaded = train::load_checkpoint(p1);
  train::save_checkpoint(p2, loaded);
  CHECK(slurp(p1) == slurp(p2));

  auto n1 = model::named_tensors(result.best.params);
  auto n2 = model::named_tensors(loaded.params);
  REQUIRE(n1.size() == n2.size());
  for (std::size_t i = 0; i < n1.size(); ++i) {
    CHECK(n1[i].first == n2[i].first);
    for (std::size_t j = 0; j < n1[i].second->value.size(); ++j)
      CHECK(n1[i].second->value[j] == n2[i].second->value[j]);
  }
  CHECK(loaded.epoch == result.best.epoch);
  CHECK(loaded.val_mse == result.best.val_mse);
  CHECK(loaded.opt.t == result.best.opt.t);
  for (std::size_t i = 0; i < loaded.opt.m.size(); ++i)
    for (std::size_t j = 0; j < loaded.opt.m[i].size(); ++j) {
      CHECK(loaded.opt.m[i][j] == result.best.opt.m[i][j]);
      CHECK(loaded.opt.v[i][j] == result.best.opt.v[i][j]);
    }

  // Reloaded parameters reproduce the identical validation score.
  CHECK(train::validation_mse(loaded.params, loaded.config, pairs) ==
        train::validation_mse(result.best.params, cfg, pairs));
}

TEST_CASE("checkpoint loader rejects corrupt containers") {
  const std::string dir = fresh_dir("train_test_badckpt");
  auto pairs = tiny_pairs(78, 1, 0.6);
  train::TrainConfig tcfg;
  tcfg.batch_size = 1;
  tcfg.stage1 = {1, 1e-3};
  tcfg.stage2 = {0, 1e-5};
  auto result = train::train<float>(pairs, pairs, tiny_model(), tcfg, nullptr);
  const std::string good = dir + "/good.ckpt";
  train::save_checkpoint(good, result.best);
  const std::string bytes = slurp(good);

  {
    std::ofstream out(dir + "/trunc.ckpt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_WITH_AS(train::load_checkpoint(dir + "/trunc.ckpt"),
                       doctest::Contains("truncated"), msecg::IoError);

  {
    std::ofstream out(dir + "/magic.ckpt", std::ios::binary);
    std::string wrong = bytes;
    wrong[0] = 'X';
    out.write(wrong.data(), static_cast<std::streamsize>(wrong.size()));
  }
  CHECK_THROWS_AS(train::load_checkpoint(dir + "/magic.ckpt"),
                  msecg::IoError);

  {
    std::ofstream out(dir + "/vers.ckpt", std::ios::binary);
    std::string wrong = bytes;
    wrong[8] = 99;  // format version field
    out.write(wrong.data(), static_cast<std::streamsize>(wrong.size()));
  }
  CHECK_THROWS_WITH_AS(train::load_checkpoint(dir + "/vers.ckpt"),
                       doctest::Contains("version"), msecg::IoError);

  CHECK_THROWS_AS(train::load_checkpoint(dir + "/absent.ckpt"),
                  msecg::IoError);
}

TEST_CASE("config json round trips and rejects unknown keys") {
  model::ModelConfig mcfg = tiny_model();
  mcfg.discretize = msecg::ssm::DiscretizeMode::zoh;
  mcfg.scan = msecg::ssm::ScanMode::parallel;
  mcfg.scan_threads = 3;
  auto mj = train::model_config_to_json(mcfg);
  auto back = train::model_config_from_json(mj);
  CHECK(back.d == mcfg.d);
  CHECK(back.discretize == mcfg.discretize);
  CHECK(back.scan == mcfg.scan);
  CHECK(back.scan_threads == 3);
  CHECK(train::model_config_to_json(back) == mj);

  train::TrainConfig tcfg;
  tcfg.seed = 1234;
  tcfg.corrupt.p_noise = 0.75;
  tcfg.stage1 = {7, 3e-4};
  auto tj = train::train_config_to_json(tcfg);
  auto tback = train::train_config_from_json(tj);
  CHECK(tback.seed == 1234);
  CHECK(tback.corrupt.p_noise == 0.75);
  CHECK(tback.stage1.epochs == 7);
  CHECK(train::train_config_to_json(tback) == tj);

  auto bad = mj;
  bad["typo_key"] = 1;
  CHECK_THROWS_AS(train::model_config_from_json(bad), msecg::ConfigError);
  auto badt = tj;
  badt["stage1"]["lrr"] = 0.1;
  CHECK_THROWS_AS(train::train_config_from_json(badt), msecg::ConfigError);

  // Partial objects keep defaults for missing keys.
  auto partial = train::model_config_from_json(nlohmann::json{{"d", 24}});
  CHECK(partial.d == 24);
  CHECK(partial.leads == 12);
}
