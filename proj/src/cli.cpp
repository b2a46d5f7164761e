// SPDX-License-Identifier: Apache-2.0
#include <msecg/cli.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <msecg/data.hpp>
#include <msecg/errors.hpp>
#include <msecg/metrics.hpp>
#include <msecg/model.hpp>
#include <msecg/rng.hpp>
#include <msecg/runconfig.hpp>
#include <msecg/ssm.hpp>
#include <msecg/svg.hpp>
#include <msecg/train.hpp>

namespace msecg {
namespace cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTagBench = 7;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

fs::path prepare_out_dir(const std::string& dir, const RunConfig& cfg) {
  const fs::path out(dir);
  fs::create_directories(out);
  write_file(out / "config.json", run_config_to_json(cfg).dump(2) + "\n");
  return out;
}

Signal predict(const train::Checkpoint<float>& ckpt, const Signal& lr) {
  if (lr.channels != ckpt.config.leads)
    throw ConfigError("input has " + std::to_string(lr.channels) +
                      " leads but the checkpoint expects " +
                      std::to_string(ckpt.config.leads));
  auto x = Tensor<float>::zeros({lr.channels, lr.length()});
  for (std::size_t i = 0; i < lr.data.size(); ++i)
    x->value[i] = static_cast<float>(lr.data[i]);
  auto y = model::forward(x, ckpt.params, ckpt.config);
  Signal out(lr.channels, lr.length() * ckpt.config.r,
             lr.sample_rate * static_cast<double>(ckpt.config.r));
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = static_cast<double>(y->value[i]);
  return out;
}

std::int64_t upsample_ratio(const data::SegmentPair& pair) {
  const std::int64_t lr_n = pair.lr.length();
  const std::int64_t hr_n = pair.hr_gt.length();
  if (lr_n < 1 || hr_n < 1 || hr_n % lr_n != 0)
    throw ConfigError("pair '" + pair.id + "': ground-truth length " +
                      std::to_string(hr_n) + " is not a multiple of input " +
                      std::to_string(lr_n));
  return hr_n / lr_n;
}

std::vector<data::SegmentPair> select_fold(std::vector<data::SegmentPair> all,
                                           const std::string& which) {
  const auto keep = [&](const data::SegmentPair& p) {
    if (which == "all") return true;
    if (which == "train") return p.fold <= 8;
    if (which == "val") return p.fold == 9;
    if (which == "test") return p.fold == 10;
    throw ConfigError("unknown fold selector '" + which + "'");
  };
  std::vector<data::SegmentPair> out;
  for (auto& p : all)
    if (keep(p)) out.push_back(std::move(p));
  if (out.empty())
    throw ConfigError("no pairs in fold selection '" + which + "'");
  return out;
}

// ---------------------------------------------------------------- prepare

int cmd_prepare(const RunConfig& cfg, const std::string& out_dir,
                const std::string& manifest) {
  std::vector<data::Record> records =
      manifest.empty()
          ? data::synth_records(cfg.seed, cfg.data.records,
                                cfg.data.duration_s, cfg.data.fs,
                                cfg.data.leads)
          : data::load_dataset(manifest);

  dsp::NoiseBank bank;
  if (cfg.data.pair.corrupt.p_noise > 0.0) {
    const double lr_fs =
        records.front().signal.sample_rate /
        static_cast<double>(cfg.data.pair.decimation);
    bank = data::make_noise_bank(cfg.seed, cfg.data.bank_entries,
                                 cfg.data.bank_duration_s, lr_fs);
  }
  auto pairs = data::make_pairs(records, cfg.data.pair, bank, cfg.seed);

  const fs::path out = prepare_out_dir(out_dir, cfg);
  data::save_pairs(out.string(), pairs);
  std::cout << "prepared " << pairs.size() << " pairs in " << out.string()
            << "\n";
  return 0;
}

// ------------------------------------------------------------------ train

int cmd_train(const RunConfig& cfg, const std::string& out_dir,
              const std::string& data_dir) {
  auto all = data::load_pairs(data_dir);
  std::vector<data::SegmentPair> train_pairs, val_pairs;
  for (auto& p : all) {
    if (p.fold <= 8)
      train_pairs.push_back(std::move(p));
    else if (p.fold == 9)
      val_pairs.push_back(std::move(p));
  }
  if (train_pairs.empty())
    throw ConfigError("dataset '" + data_dir + "' has no training folds 1-8");
  if (val_pairs.empty())
    throw ConfigError("dataset '" + data_dir + "' has no validation fold 9");

  dsp::NoiseBank bank;
  const dsp::NoiseBank* bank_ptr = nullptr;
  if (cfg.train.corrupt.p_noise > 0.0) {
    bank = data::make_noise_bank(cfg.seed, cfg.data.bank_entries,
                                 cfg.data.bank_duration_s,
                                 train_pairs.front().lr.sample_rate);
    bank_ptr = &bank;
  }

  const fs::path out = prepare_out_dir(out_dir, cfg);
  auto result =
      train::train<float>(train_pairs, val_pairs, cfg.model, cfg.train,
                          bank_ptr);

  std::string log = "epoch,stage,lr,train_loss,val_mse\n";
  for (const auto& e : result.log)
    log += std::to_string(e.epoch) + "," + std::to_string(e.stage) + "," +
           num(e.lr) + "," + num(e.train_loss) + "," + num(e.val_mse) + "\n";
  log += "# best epoch " + std::to_string(result.best.epoch) + " val_mse " +
         num(result.best.val_mse) + "\n";
  write_file(out / "train_log.csv", log);
  train::save_checkpoint((out / "best.ckpt").string(), result.best);

  std::cout << "best epoch " << result.best.epoch << " val_mse "
            << num(result.best.val_mse) << "\n";
  return 0;
}

// ------------------------------------------------------------------- eval

metrics::MetricsReport score_li(const std::vector<data::SegmentPair>& pairs) {
  std::vector<Signal> preds, gts;
  for (const auto& p : pairs) {
    preds.push_back(dsp::li_upsample(p.lr, upsample_ratio(p)));
    gts.push_back(p.hr_gt);
  }
  return metrics::evaluate(preds, gts);
}

metrics::MetricsReport score_model(const train::Checkpoint<float>& ckpt,
                                   const std::vector<data::SegmentPair>& pairs) {
  std::vector<Signal> preds, gts;
  for (const auto& p : pairs) {
    preds.push_back(predict(ckpt, p.lr));
    gts.push_back(p.hr_gt);
  }
  return metrics::evaluate(preds, gts);
}

int cmd_eval(const RunConfig& cfg, const std::string& out_dir,
             const std::string& data_dir, const std::string& checkpoint,
             const std::string& baseline, const std::string& fold) {
  if (checkpoint.empty() && baseline.empty())
    throw ConfigError("eval needs --checkpoint or --baseline li");
  if (!checkpoint.empty() && !baseline.empty())
    throw ConfigError("eval takes --checkpoint or --baseline, not both");
  if (!baseline.empty() && baseline != "li")
    throw ConfigError("unknown baseline '" + baseline + "'");

  const auto pairs = select_fold(data::load_pairs(data_dir), fold);
  const fs::path out = prepare_out_dir(out_dir, cfg);

  metrics::MetricsReport report;
  if (!checkpoint.empty()) {
    const auto ckpt = train::load_checkpoint(checkpoint);
    report = score_model(ckpt, pairs);
    // The reference upsampler is scored alongside for a comparison table.
    const auto li = score_li(pairs);
    write_file(out / "li_report.csv", metrics::to_csv(li));
    write_file(out / "li_report.json", metrics::to_json(li));
    std::string cmp = "metric,li,model\n";
    cmp += "mse," + num(li.mse.mean) + "," + num(report.mse.mean) + "\n";
    cmp += "cos," + num(li.cos_sim.mean) + "," + num(report.cos_sim.mean) +
           "\n";
    cmp += "snr_db," + num(li.snr.mean) + "," + num(report.snr.mean) + "\n";
    cmp += "mad," + num(li.mad.mean) + "," + num(report.mad.mean) + "\n";
    write_file(out / "comparison.csv", cmp);
  } else {
    report = score_li(pairs);
  }
  write_file(out / "report.csv", metrics::to_csv(report));
  write_file(out / "report.json", metrics::to_json(report));

  std::cout << "segments " << report.segments() << " mse " << num(report.mse.mean)
            << " cos " << num(report.cos_sim.mean) << " snr_db "
            << num(report.snr.mean) << " mad " << num(report.mad.mean) << "\n";
  return 0;
}

// ----------------------------------------------------------- infer / plot

const data::SegmentPair& pair_at(const std::vector<data::SegmentPair>& pairs,
                                 std::int64_t index) {
  if (index < 0 || index >= static_cast<std::int64_t>(pairs.size()))
    throw ConfigError("--index " + std::to_string(index) +
                      " out of range, dataset has " +
                      std::to_string(pairs.size()) + " pairs");
  return pairs[static_cast<std::size_t>(index)];
}

int cmd_infer(const RunConfig& cfg, const std::string& out_dir,
              const std::string& data_dir, const std::string& checkpoint,
              std::int64_t index) {
  const auto pairs = data::load_pairs(data_dir);
  const auto& pair = pair_at(pairs, index);
  const auto ckpt = train::load_checkpoint(checkpoint);
  const Signal pred = predict(ckpt, pair.lr);

  const fs::path out = prepare_out_dir(out_dir, cfg);
  data::write_raster((out / "pred.f32").string(), pred);
  std::cout << "wrote " << pred.channels << "x" << pred.length()
            << " raster to " << (out / "pred.f32").string() << "\n";
  return 0;
}

int cmd_plot(const RunConfig& cfg, const std::string& out_dir,
             const std::string& data_dir, const std::string& checkpoint,
             const std::string& baseline, const std::string& pred_file,
             std::int64_t index) {
  const int sources = (!checkpoint.empty()) + (!baseline.empty()) +
                      (!pred_file.empty());
  if (sources != 1)
    throw ConfigError(
        "plot needs exactly one of --checkpoint, --baseline li, --pred");
  if (!baseline.empty() && baseline != "li")
    throw ConfigError("unknown baseline '" + baseline + "'");

  const auto pairs = data::load_pairs(data_dir);
  const auto& pair = pair_at(pairs, index);
  const Signal& gt = pair.hr_gt;
  const Signal li = dsp::li_upsample(pair.lr, upsample_ratio(pair));

  Signal pred;
  std::string method;
  if (!checkpoint.empty()) {
    pred = predict(train::load_checkpoint(checkpoint), pair.lr);
    method = "model";
  } else if (!baseline.empty()) {
    pred = li;
    method = "li";
  } else {
    pred = data::read_raster(pred_file, gt.channels, gt.sample_rate,
                             gt.length());
    method = "supplied";
  }
  if (pred.channels != gt.channels || pred.length() != gt.length())
    throw DimensionError("prediction shape does not match ground truth");

  const auto lead0 = [](const Signal& s) {
    return std::vector<double>(s.data.begin(), s.data.begin() + s.length());
  };
  char mad_buf[64];
  const auto mad_label = [&](const std::string& name, const Signal& s) {
    std::snprintf(mad_buf, sizeof(mad_buf), "%.6g",
                  metrics::mad(s.data, gt.data));
    return name + " (MAD " + std::string(mad_buf) + ")";
  };
  std::vector<svg::Series> series;
  series.push_back({"ground truth", "#202020", lead0(gt)});
  series.push_back({mad_label("linear interp", li), "#1f77b4", lead0(li)});
  series.push_back({mad_label(method, pred), "#d62728", lead0(pred)});

  const std::string chart = svg::render_overlay(
      series, pair.id + " lead 0", "s", 1.0 / gt.sample_rate);

  const fs::path out = prepare_out_dir(out_dir, cfg);
  write_file(out / "plot.svg", chart);
  std::cout << "wrote " << (out / "plot.svg").string() << "\n";
  return 0;
}

// ------------------------------------------------------------- bench-scan

int cmd_bench_scan(const RunConfig& cfg, const std::string& out_dir,
                   std::vector<std::int64_t> lengths, int reps,
                   std::int64_t lanes, std::int64_t state) {
  if (lengths.empty())
    lengths = {1024, 2048, 4096, 8192, 16384, 32768, 65536};
  for (auto l : lengths)
    if (l < 2) throw ConfigError("bench lengths must be >= 2");
  if (reps < 1) throw ConfigError("bench reps must be >= 1");
  if (lanes < 1 || state < 1)
    throw ConfigError("bench lanes and state must be >= 1");

  const fs::path out = prepare_out_dir(out_dir, cfg);
  std::string csv = "impl,length,lanes,state,reps,median_ns\n";
  std::vector<double> ls, seq_ns, par_ns;

  for (const auto l : lengths) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(l), kTagBench));
    const std::size_t lis = static_cast<std::size_t>(l * lanes * state);
    std::vector<double> abar(lis), bbar(lis), x(static_cast<std::size_t>(l * lanes));
    for (auto& v : abar) v = rng.uniform(0.85, 0.999);
    for (auto& v : bbar) v = 0.1 * rng.normal();
    for (auto& v : x) v = rng.normal();
    std::vector<double> h_seq(lis), h_par(lis);

    ssm::scan_sequential_kernel(abar.data(), bbar.data(), x.data(), l, lanes,
                                state, h_seq.data());
    ssm::scan_parallel_kernel(abar.data(), bbar.data(), x.data(), l, lanes,
                              state, cfg.model.scan_threads, h_par.data());
    double worst = 0.0;
    for (std::size_t i = 0; i < lis; ++i)
      worst = std::max(worst, std::abs(h_seq[i] - h_par[i]));
    if (worst > 1e-9)
      throw ContractError("bench-scan: implementations disagree at L=" +
                          std::to_string(l) + " (max diff " + num(worst) +
                          ")");

    const auto median_time = [&](auto&& kernel) {
      std::vector<double> ns;
      for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        kernel();
        const auto t1 = std::chrono::steady_clock::now();
        ns.push_back(static_cast<double>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0)
                .count()));
      }
      std::sort(ns.begin(), ns.end());
      return ns[ns.size() / 2];
    };
    const double sq = median_time([&] {
      ssm::scan_sequential_kernel(abar.data(), bbar.data(), x.data(), l,
                                  lanes, state, h_seq.data());
    });
    const double pq = median_time([&] {
      ssm::scan_parallel_kernel(abar.data(), bbar.data(), x.data(), l, lanes,
                                state, cfg.model.scan_threads, h_par.data());
    });

    const std::string tail = "," + std::to_string(lanes) + "," +
                             std::to_string(state) + "," +
                             std::to_string(reps) + ",";
    csv += "sequential," + std::to_string(l) + tail + num(sq) + "\n";
    csv += "parallel," + std::to_string(l) + tail + num(pq) + "\n";
    ls.push_back(static_cast<double>(l));
    seq_ns.push_back(sq);
    par_ns.push_back(pq);
  }

  std::string summary;
  if (ls.size() >= 2) {
    const double r2_seq = metrics::linear_fit_r2(ls, seq_ns);
    const double r2_par = metrics::linear_fit_r2(ls, par_ns);
    csv += "# r2 sequential " + num(r2_seq) + "\n";
    csv += "# r2 parallel " + num(r2_par) + "\n";
    summary = "r2 sequential " + num(r2_seq) + " parallel " + num(r2_par);
  } else {
    summary = "r2 skipped (need >= 2 lengths)";
  }
  write_file(out / "bench.csv", csv);
  std::cout << summary << "\n";
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"MSECG: 1-D ECG super-resolution toolkit"};
  app.require_subcommand(1);

  struct Common {
    std::string config, out_dir, profile;
    std::uint64_t seed = 0;
    int threads = 1;
  };
  // One Common per subcommand so flag presence can be queried per parse.
  std::vector<std::unique_ptr<Common>> storage;
  const auto add_common = [&](CLI::App* sub) -> Common& {
    storage.push_back(std::make_unique<Common>());
    Common& c = *storage.back();
    sub->add_option("--config", c.config, "JSON config file merged over the profile")
        ->envname("MSECG_CONFIG");
    sub->add_option("--profile", c.profile, "named preset: desk or paper")
        ->envname("MSECG_PROFILE")
        ->check(CLI::IsMember({"desk", "paper"}));
    sub->add_option("--seed", c.seed, "master seed (also sets the training seed)")
        ->envname("MSECG_SEED");
    sub->add_option("--threads", c.threads, "worker threads for the parallel scan")
        ->envname("MSECG_THREADS")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out-dir", c.out_dir, "output directory")
        ->envname("MSECG_OUT_DIR")
        ->required();
    return c;
  };
  const auto resolve = [](CLI::App* sub, const Common& c) {
    RunConfig cfg =
        c.profile.empty() ? RunConfig{} : profile_config(c.profile);
    if (!c.config.empty()) cfg = merge_config_file(cfg, c.config);
    if (sub->count("--seed") > 0) {
      cfg.seed = c.seed;
      cfg.train.seed = c.seed;
    }
    if (sub->count("--threads") > 0) cfg.model.scan_threads = c.threads;
    cfg.validate();
    return cfg;
  };

  auto* prepare = app.add_subcommand(
      "prepare", "synthesize or import records and materialize pairs");
  auto& prepare_c = add_common(prepare);
  std::string prepare_manifest;
  prepare->add_option("--manifest", prepare_manifest,
                      "existing dataset manifest to import instead of "
                      "synthesizing records");

  auto* train_cmd =
      app.add_subcommand("train", "two-stage training on a prepared dataset");
  auto& train_c = add_common(train_cmd);
  std::string train_data;
  train_cmd->add_option("--data", train_data, "prepared pair directory")
      ->required();

  auto* eval_cmd = app.add_subcommand(
      "eval", "score a checkpoint or the interpolation baseline");
  auto& eval_c = add_common(eval_cmd);
  std::string eval_data, eval_ckpt, eval_baseline, eval_fold = "test";
  eval_cmd->add_option("--data", eval_data, "prepared pair directory")
      ->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint");
  eval_cmd->add_option("--baseline", eval_baseline,
                       "score a reference method instead (li)");
  eval_cmd->add_option("--fold", eval_fold, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));

  auto* infer_cmd =
      app.add_subcommand("infer", "reconstruct one pair's input");
  auto& infer_c = add_common(infer_cmd);
  std::string infer_data, infer_ckpt;
  std::int64_t infer_index = 0;
  infer_cmd->add_option("--data", infer_data, "prepared pair directory")
      ->required();
  infer_cmd->add_option("--checkpoint", infer_ckpt, "trained checkpoint")
      ->required();
  infer_cmd->add_option("--index", infer_index, "pair index in the dataset");

  auto* plot_cmd = app.add_subcommand(
      "plot", "overlay ground truth, interpolation and a reconstruction");
  auto& plot_c = add_common(plot_cmd);
  std::string plot_data, plot_ckpt, plot_baseline, plot_pred;
  std::int64_t plot_index = 0;
  plot_cmd->add_option("--data", plot_data, "prepared pair directory")
      ->required();
  plot_cmd->add_option("--checkpoint", plot_ckpt, "trained checkpoint");
  plot_cmd->add_option("--baseline", plot_baseline,
                       "plot a reference method instead (li)");
  plot_cmd->add_option("--pred", plot_pred,
                       "raster file holding the series to plot");
  plot_cmd->add_option("--index", plot_index, "pair index in the dataset");

  auto* bench_cmd = app.add_subcommand(
      "bench-scan", "time both scan kernels across sequence lengths");
  auto& bench_c = add_common(bench_cmd);
  std::vector<std::int64_t> bench_lengths;
  int bench_reps = 5;
  std::int64_t bench_lanes = 8, bench_state = 16;
  bench_cmd->add_option("--lengths", bench_lengths,
                        "sequence lengths to time (default 2^10..2^16)");
  bench_cmd->add_option("--reps", bench_reps, "repetitions per length");
  bench_cmd->add_option("--lanes", bench_lanes, "scanned channel count");
  bench_cmd->add_option("--state", bench_state, "state size per channel");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (app.got_subcommand(prepare))
      return cmd_prepare(resolve(prepare, prepare_c), prepare_c.out_dir,
                         prepare_manifest);
    if (app.got_subcommand(train_cmd))
      return cmd_train(resolve(train_cmd, train_c), train_c.out_dir,
                       train_data);
    if (app.got_subcommand(eval_cmd))
      return cmd_eval(resolve(eval_cmd, eval_c), eval_c.out_dir, eval_data,
                      eval_ckpt, eval_baseline, eval_fold);
    if (app.got_subcommand(infer_cmd))
      return cmd_infer(resolve(infer_cmd, infer_c), infer_c.out_dir,
                       infer_data, infer_ckpt, infer_index);
    if (app.got_subcommand(plot_cmd))
      return cmd_plot(resolve(plot_cmd, plot_c), plot_c.out_dir, plot_data,
                      plot_ckpt, plot_baseline, plot_pred, plot_index);
    if (app.got_subcommand(bench_cmd))
      return cmd_bench_scan(resolve(bench_cmd, bench_c), bench_c.out_dir,
                            bench_lengths, bench_reps, bench_lanes,
                            bench_state);
    throw ContractError("no subcommand dispatched");
  } catch (const std::exception& e) {
    std::cerr << "msecg: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace cli
}  // namespace msecg
