// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <msecg/data.hpp>
#include <msecg/metrics.hpp>
#include <msecg/model.hpp>
#include <msecg/train.hpp>

using namespace msecg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CmdResult {
  int code = -1;
  std::string out, err;
};

// Spawns the real binary through the shell; `env` is a prefix like
// "MSECG_SEED=7" so environment-variable behavior is tested end to end.
CmdResult run_cmd(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "msecg_cli_io";
  fs::create_directories(dir);
  const fs::path so = dir / ("out" + std::to_string(counter));
  const fs::path se = dir / ("err" + std::to_string(counter));
  ++counter;
  std::string cmd = env.empty() ? "" : env + " ";
  cmd += std::string(MSECG_BIN) + " " + args + " >" + so.string() + " 2>" +
         se.string();
  const int raw = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(so);
  r.err = slurp(se);
  return r;
}

std::string fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

// Minimal well-formedness check: every element closes in order. Attribute
// values in our output never contain '<' or '>', so scanning is enough.
bool xml_well_formed(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '<') {
      ++i;
      continue;
    }
    const std::size_t j = s.find('>', i);
    if (j == std::string::npos) return false;
    std::string tag = s.substr(i + 1, j - i - 1);
    i = j + 1;
    if (tag.empty()) return false;
    if (tag.front() == '?' || tag.front() == '!') continue;
    const bool closing = tag.front() == '/';
    const bool self_closing = tag.back() == '/';
    if (closing) tag = tag.substr(1);
    if (self_closing) tag.pop_back();
    const std::string name = tag.substr(0, tag.find_first_of(" \t\n"));
    if (name.empty()) return false;
    if (closing) {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else if (!self_closing) {
      stack.push_back(name);
    }
  }
  return stack.empty();
}

// Shared prepared dataset plus a short trained run, built once.
struct Fixture {
  std::string data_dir, run_dir, cfg_path, ckpt;
};

const Fixture& fx() {
  static Fixture f = [] {
    Fixture x;
    const std::string base = fresh_dir("msecg_cli_fix");
    x.data_dir = base + "/data";
    x.run_dir = base + "/run";
    x.cfg_path = base + "/train.json";
    const json cfg = {
        {"train",
         {{"batch_size", 4},
          {"stage1", {{"epochs", 6}, {"lr", 1e-3}}},
          {"stage2", {{"epochs", 2}, {"lr", 1e-4}}}}}};
    std::ofstream(x.cfg_path) << cfg.dump(2) << "\n";

    auto p = run_cmd("prepare --profile desk --seed 5 --out-dir " + x.data_dir);
    REQUIRE(p.code == 0);
    auto t = run_cmd("train --profile desk --seed 5 --config " + x.cfg_path +
                     " --data " + x.data_dir + " --out-dir " + x.run_dir);
    REQUIRE(t.code == 0);
    x.ckpt = x.run_dir + "/best.ckpt";
    return x;
  }();
  return f;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream ss(text);
  for (std::string line; std::getline(ss, line);) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::istringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
  return cells;
}

}  // namespace

TEST_CASE("prepare writes a deterministic pair set and config snapshot") {
  const std::string a = fresh_dir("msecg_cli_prep_a");
  const std::string b = fresh_dir("msecg_cli_prep_b");
  auto ra = run_cmd("prepare --profile desk --seed 5 --out-dir " + a);
  REQUIRE(ra.code == 0);
  CHECK(ra.out.find("12 pairs") != std::string::npos);
  auto rb = run_cmd("prepare --profile desk --seed 5 --out-dir " + b);
  REQUIRE(rb.code == 0);

  // Byte-identical reruns, file for file.
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a))
    names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  CHECK(names.size() == 2 + 2 * 12);  // config + manifest + lr/hr per pair
  for (const auto& n : names) {
    REQUIRE(fs::exists(fs::path(b) / n));
    CHECK(slurp(fs::path(a) / n) == slurp(fs::path(b) / n));
  }

  auto pairs = data::load_pairs(a);
  REQUIRE(pairs.size() == 12);
  std::map<int, int> folds;
  for (const auto& p : pairs) {
    ++folds[p.fold];
    CHECK(p.hr_gt.length() == 10 * p.lr.length());
    CHECK(!p.corruption.applied);  // desk pairs materialize clean
  }
  CHECK(folds.size() == 10);

  const json snap = json::parse(slurp(fs::path(a) / "config.json"));
  CHECK(snap["seed"].get<std::uint64_t>() == 5);
  CHECK(snap["model"]["d"].get<int>() == 16);
  CHECK(snap["data"]["records"].get<int>() == 12);
}

TEST_CASE("prepare fails loudly on a missing manifest") {
  const std::string out = fresh_dir("msecg_cli_prep_bad");
  auto r = run_cmd("prepare --profile desk --manifest /nonexistent/m.jsonl "
                   "--out-dir " + out);
  CHECK(r.code != 0);
  CHECK(r.err.find("/nonexistent/m.jsonl") != std::string::npos);
}

TEST_CASE("flags beat environment beats config file beats defaults") {
  const std::string base = fresh_dir("msecg_cli_prec");
  const std::string cfg = base + "/cfg.json";
  std::ofstream(cfg) << R"({"seed": 11, "data": {"records": 3}})" << "\n";

  const auto seed_of = [&](const std::string& dir) {
    return json::parse(slurp(fs::path(dir) / "config.json"))["seed"]
        .get<std::uint64_t>();
  };

  auto r1 = run_cmd("prepare --profile desk --config " + cfg + " --out-dir " +
                    base + "/file");
  REQUIRE(r1.code == 0);
  CHECK(seed_of(base + "/file") == 11);
  const json snap = json::parse(slurp(fs::path(base) / "file/config.json"));
  CHECK(snap["data"]["records"].get<int>() == 3);
  CHECK(snap["model"]["d"].get<int>() == 16);  // profile survives the merge

  auto r2 = run_cmd("prepare --profile desk --config " + cfg + " --out-dir " +
                    base + "/env", "MSECG_SEED=22");
  REQUIRE(r2.code == 0);
  CHECK(seed_of(base + "/env") == 22);

  auto r3 = run_cmd("prepare --profile desk --config " + cfg +
                    " --seed 33 --out-dir " + base + "/flag", "MSECG_SEED=22");
  REQUIRE(r3.code == 0);
  CHECK(seed_of(base + "/flag") == 33);
  // The master seed flag also repoints the training seed.
  const json flag_snap =
      json::parse(slurp(fs::path(base) / "flag/config.json"));
  CHECK(flag_snap["train"]["seed"].get<std::uint64_t>() == 33);

  std::ofstream(base + "/bad.json") << R"({"bogus": 1})" << "\n";
  auto r4 = run_cmd("prepare --profile desk --config " + base +
                    "/bad.json --out-dir " + base + "/bad");
  CHECK(r4.code != 0);
  CHECK(r4.err.find("bogus") != std::string::npos);
}

TEST_CASE("train writes a checkpoint and an epoch log that agree") {
  const auto& f = fx();
  REQUIRE(fs::exists(f.ckpt));
  REQUIRE(fs::exists(fs::path(f.run_dir) / "config.json"));

  const auto lines = lines_of(slurp(fs::path(f.run_dir) / "train_log.csv"));
  REQUIRE(lines.size() == 1 + 8 + 1);  // header, 6 + 2 epochs, best marker
  CHECK(lines[0] == "epoch,stage,lr,train_loss,val_mse");
  CHECK(lines.back().rfind("# best epoch ", 0) == 0);

  double best_val = HUGE_VAL;
  std::int64_t best_epoch = -1;
  int stage2_rows = 0;
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    const auto cells = split_csv(lines[i]);
    REQUIRE(cells.size() == 5);
    const std::int64_t epoch = std::stoll(cells[0]);
    const int stage = std::stoi(cells[1]);
    const double lr = std::strtod(cells[2].c_str(), nullptr);
    const double val = std::strtod(cells[4].c_str(), nullptr);
    CHECK(epoch == static_cast<std::int64_t>(i - 1));
    if (stage == 2) {
      ++stage2_rows;
      CHECK(lr == 1e-4);
    } else {
      CHECK(lr == 1e-3);
    }
    if (val < best_val) {
      best_val = val;
      best_epoch = epoch;
    }
  }
  CHECK(stage2_rows == 2);

  const auto ckpt = train::load_checkpoint(f.ckpt);
  CHECK(ckpt.epoch == best_epoch);
  CHECK(ckpt.val_mse == best_val);  // %.17g round-trips doubles exactly
  CHECK(ckpt.config.d == 16);
  CHECK(ckpt.train_config.stage1.epochs == 6);
}

TEST_CASE("eval baseline li writes agreeing csv and json reports") {
  const auto& f = fx();
  const std::string out = fresh_dir("msecg_cli_eval_li");
  auto r = run_cmd("eval --profile desk --data " + f.data_dir +
                   " --baseline li --fold all --out-dir " + out);
  REQUIRE(r.code == 0);

  const json rep = json::parse(slurp(fs::path(out) / "report.json"));
  CHECK(rep["segments"].get<int>() == 12);
  for (const char* k : {"mse", "cos", "snr_db", "mad"}) {
    CHECK(rep.contains(k));
    CHECK(std::isfinite(rep[k]["mean"].get<double>()));
  }

  const auto lines = lines_of(slurp(fs::path(out) / "report.csv"));
  REQUIRE(lines.size() == 1 + 12 + 2);
  const auto mean = split_csv(lines[lines.size() - 2]);
  REQUIRE(mean.size() == 5);
  CHECK(mean[0] == "mean");
  CHECK(std::strtod(mean[1].c_str(), nullptr) == rep["mse"]["mean"].get<double>());
  CHECK(std::strtod(mean[2].c_str(), nullptr) == rep["cos"]["mean"].get<double>());
  CHECK(std::strtod(mean[3].c_str(), nullptr) == rep["snr_db"]["mean"].get<double>());
  CHECK(std::strtod(mean[4].c_str(), nullptr) == rep["mad"]["mean"].get<double>());
}

TEST_CASE("eval with a checkpoint emits the li comparison table") {
  const auto& f = fx();
  const std::string out = fresh_dir("msecg_cli_eval_m");
  auto r = run_cmd("eval --profile desk --data " + f.data_dir +
                   " --checkpoint " + f.ckpt + " --fold all --out-dir " + out);
  REQUIRE(r.code == 0);

  const json model_rep = json::parse(slurp(fs::path(out) / "report.json"));
  const json li_rep = json::parse(slurp(fs::path(out) / "li_report.json"));
  const auto lines = lines_of(slurp(fs::path(out) / "comparison.csv"));
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "metric,li,model");
  const std::map<std::string, std::string> key{{"mse", "mse"},
                                               {"cos", "cos"},
                                               {"snr_db", "snr_db"},
                                               {"mad", "mad"}};
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv(lines[i]);
    REQUIRE(cells.size() == 3);
    const auto& k = key.at(cells[0]);
    CHECK(std::strtod(cells[1].c_str(), nullptr) ==
          li_rep[k]["mean"].get<double>());
    CHECK(std::strtod(cells[2].c_str(), nullptr) ==
          model_rep[k]["mean"].get<double>());
  }

  // Exactly one scoring method must be chosen.
  auto none = run_cmd("eval --profile desk --data " + f.data_dir +
                      " --out-dir " + out + "/none");
  CHECK(none.code != 0);
  auto both = run_cmd("eval --profile desk --data " + f.data_dir +
                      " --baseline li --checkpoint " + f.ckpt +
                      " --out-dir " + out + "/both");
  CHECK(both.code != 0);
}

TEST_CASE("infer writes the widened raster the library would produce") {
  const auto& f = fx();
  const std::string out = fresh_dir("msecg_cli_infer");
  auto r = run_cmd("infer --profile desk --data " + f.data_dir +
                   " --checkpoint " + f.ckpt + " --index 1 --out-dir " + out);
  REQUIRE(r.code == 0);

  auto pairs = data::load_pairs(f.data_dir);
  const auto& pair = pairs[1];
  const auto pred_path = fs::path(out) / "pred.f32";
  REQUIRE(fs::exists(pred_path));
  CHECK(fs::file_size(pred_path) ==
        static_cast<std::uintmax_t>(pair.lr.channels * pair.lr.length() * 10 *
                                    4));

  // The file must match an in-process forward pass bit for bit.
  const auto ckpt = train::load_checkpoint(f.ckpt);
  auto x = Tensor<float>::zeros({pair.lr.channels, pair.lr.length()});
  for (std::size_t i = 0; i < pair.lr.data.size(); ++i)
    x->value[i] = static_cast<float>(pair.lr.data[i]);
  auto y = model::forward(x, ckpt.params, ckpt.config);
  Signal want(pair.lr.channels, pair.lr.length() * 10,
              pair.lr.sample_rate * 10);
  for (std::size_t i = 0; i < want.data.size(); ++i)
    want.data[i] = static_cast<double>(y->value[i]);
  const std::string ref_path = out + "/ref.f32";
  data::write_raster(ref_path, want);
  CHECK(slurp(pred_path) == slurp(ref_path));

  auto bad = run_cmd("infer --profile desk --data " + f.data_dir +
                     " --checkpoint " + f.ckpt + " --index 99 --out-dir " +
                     out + "/bad");
  CHECK(bad.code != 0);
  CHECK(bad.err.find("out of range") != std::string::npos);
}

TEST_CASE("plot overlays three series with mad-annotated legend") {
  const auto& f = fx();
  const std::string out = fresh_dir("msecg_cli_plot");
  auto r = run_cmd("plot --profile desk --data " + f.data_dir +
                   " --checkpoint " + f.ckpt + " --index 0 --out-dir " + out);
  REQUIRE(r.code == 0);
  const std::string chart = slurp(fs::path(out) / "plot.svg");
  CHECK(xml_well_formed(chart));
  CHECK(chart.rfind("<svg", 0) == 0);

  std::size_t polylines = 0;
  for (std::size_t at = chart.find("<polyline"); at != std::string::npos;
       at = chart.find("<polyline", at + 1))
    ++polylines;
  CHECK(polylines == 3);
  CHECK(chart.find("ground truth") != std::string::npos);
  CHECK(chart.find("linear interp (MAD ") != std::string::npos);
  CHECK(chart.find("model (MAD ") != std::string::npos);

  // Plotting the ground truth against itself annotates a MAD of zero.
  auto pairs = data::load_pairs(f.data_dir);
  auto self = run_cmd("plot --profile desk --data " + f.data_dir + " --pred " +
                      f.data_dir + "/" + pairs[0].id + ".hr.f32 --index 0 "
                      "--out-dir " + out + "/self");
  REQUIRE(self.code == 0);
  const std::string self_chart = slurp(fs::path(out) / "self/plot.svg");
  CHECK(self_chart.find("supplied (MAD 0)") != std::string::npos);

  auto none = run_cmd("plot --profile desk --data " + f.data_dir +
                      " --index 0 --out-dir " + out + "/none");
  CHECK(none.code != 0);
  auto both = run_cmd("plot --profile desk --data " + f.data_dir +
                      " --baseline li --checkpoint " + f.ckpt +
                      " --index 0 --out-dir " + out + "/both");
  CHECK(both.code != 0);
}

TEST_CASE("bench-scan emits one row per implementation and length") {
  const std::string out = fresh_dir("msecg_cli_bench");
  auto r = run_cmd("bench-scan --profile desk --lengths 256 512 1024 "
                   "--reps 2 --out-dir " + out);
  REQUIRE(r.code == 0);

  const auto lines = lines_of(slurp(fs::path(out) / "bench.csv"));
  REQUIRE(lines.size() == 1 + 6 + 2);
  CHECK(lines[0] == "impl,length,lanes,state,reps,median_ns");
  std::map<std::string, int> seen;
  for (std::size_t i = 1; i <= 6; ++i) {
    const auto cells = split_csv(lines[i]);
    REQUIRE(cells.size() == 6);
    ++seen[cells[0] + ":" + cells[1]];
    CHECK(std::strtod(cells[5].c_str(), nullptr) > 0.0);
  }
  CHECK(seen.size() == 6);
  for (const auto& [k, v] : seen) CHECK(v == 1);
  CHECK(lines[7].rfind("# r2 sequential ", 0) == 0);
  CHECK(lines[8].rfind("# r2 parallel ", 0) == 0);
  CHECK(r.out.find("r2 sequential") != std::string::npos);
}

TEST_CASE("usage errors exit nonzero") {
  auto none = run_cmd("");
  CHECK(none.code != 0);
  auto unknown = run_cmd("frobnicate --out-dir /tmp/x");
  CHECK(unknown.code != 0);
  auto badflag = run_cmd("prepare --profile desk --out-dir /tmp/x --nope");
  CHECK(badflag.code != 0);
  auto badprofile = run_cmd("prepare --profile huge --out-dir /tmp/x");
  CHECK(badprofile.code != 0);
}
