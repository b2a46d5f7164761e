// SPDX-License-Identifier: Apache-2.0
#include <msecg/data.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include <json.hpp>

#include <msecg/errors.hpp>

namespace msecg {
namespace data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed-derivation namespaces so records, noise entries and corruption draws
// never share a stream even when their indices collide.
constexpr std::uint64_t kTagRecord = 1;
constexpr std::uint64_t kTagNoise = 2;
constexpr std::uint64_t kTagCorrupt = 3;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ParameterError(msg);
}

}  // namespace

void write_raster(const std::string& path, const Signal& s) {
  s.validate("write_raster");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_raster: cannot open " + path);
  std::vector<float> buf(s.data.size());
  for (std::size_t i = 0; i < s.data.size(); ++i)
    buf[i] = static_cast<float>(s.data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw IoError("write_raster: short write to " + path);
}

Signal read_raster(const std::string& path, std::int64_t channels,
                   double sample_rate, std::int64_t samples) {
  require(channels > 0 && samples > 0 && sample_rate > 0,
          "read_raster: invalid declared shape for " + path);
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw IoError("read_raster: cannot stat " + path);
  const std::uint64_t want =
      static_cast<std::uint64_t>(channels * samples) * sizeof(float);
  if (size != want)
    throw IoError("read_raster: " + path + " holds " + std::to_string(size) +
                  " bytes, manifest declares " + std::to_string(want));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_raster: cannot open " + path);
  std::vector<float> buf(static_cast<std::size_t>(channels * samples));
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw IoError("read_raster: short read from " + path);
  Signal s(channels, samples, sample_rate);
  for (std::size_t i = 0; i < buf.size(); ++i)
    s.data[i] = static_cast<double>(buf[i]);
  return s;
}

namespace {

json manifest_row(const RecordManifest& r) {
  return json{{"id", r.id},         {"fold", r.fold},
              {"leads", r.leads},   {"sample_rate", r.sample_rate},
              {"samples", r.samples}, {"path", r.path}};
}

RecordManifest parse_manifest_row(const json& j, const std::string& where) {
  RecordManifest r;
  try {
    r.id = j.at("id").get<std::string>();
    r.fold = j.at("fold").get<int>();
    r.leads = j.at("leads").get<std::int64_t>();
    r.sample_rate = j.at("sample_rate").get<double>();
    r.samples = j.at("samples").get<std::int64_t>();
    r.path = j.at("path").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError("load_manifest: bad row in " + where + ": " + e.what());
  }
  if (r.fold < 1 || r.fold > 10)
    throw ParameterError("load_manifest: record " + r.id + " fold " +
                         std::to_string(r.fold) + " outside 1..10");
  if (r.leads < 1 || r.samples < 1 || r.sample_rate <= 0)
    throw ParameterError("load_manifest: record " + r.id +
                         " declares an invalid shape");
  return r;
}

}  // namespace

void write_manifest(const std::string& path,
                    const std::vector<RecordManifest>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_manifest: cannot open " + path);
  for (const auto& r : records) out << manifest_row(r).dump() << "\n";
  if (!out) throw IoError("write_manifest: short write to " + path);
}

std::vector<RecordManifest> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_manifest: cannot open " + path);
  std::vector<RecordManifest> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("load_manifest: unparseable line in " + path + ": " +
                    e.what());
    }
    out.push_back(parse_manifest_row(j, path));
  }
  return out;
}

std::vector<Record> load_dataset(const std::string& manifest_path) {
  const auto metas = load_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<Record> out;
  out.reserve(metas.size());
  for (const auto& meta : metas) {
    fs::path p = meta.path;
    if (p.is_relative()) p = base / p;
    Record rec;
    rec.meta = meta;
    rec.signal =
        read_raster(p.string(), meta.leads, meta.sample_rate, meta.samples);
    out.push_back(std::move(rec));
  }
  return out;
}

void save_dataset(const std::string& dir, const std::vector<Record>& records,
                  const std::string& manifest_name) {
  fs::create_directories(dir);
  std::vector<RecordManifest> metas;
  metas.reserve(records.size());
  for (const auto& rec : records) {
    RecordManifest meta = rec.meta;
    meta.leads = rec.signal.channels;
    meta.sample_rate = rec.signal.sample_rate;
    meta.samples = rec.signal.length();
    if (meta.path.empty()) meta.path = meta.id + ".f32";
    write_raster((fs::path(dir) / meta.path).string(), rec.signal);
    metas.push_back(std::move(meta));
  }
  write_manifest((fs::path(dir) / manifest_name).string(), metas);
}

FoldSplit split_folds(const std::vector<RecordManifest>& records) {
  FoldSplit split;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int f = records[i].fold;
    if (f < 1 || f > 10)
      throw ParameterError("split_folds: record " + records[i].id + " fold " +
                           std::to_string(f) + " outside 1..10");
    if (f <= 8)
      split.train.push_back(i);
    else if (f == 9)
      split.val.push_back(i);
    else
      split.test.push_back(i);
  }
  return split;
}

std::vector<Record> select_records(const std::vector<Record>& records,
                                   const std::vector<std::size_t>& idx) {
  std::vector<Record> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    if (i >= records.size())
      throw ParameterError("select_records: index out of range");
    out.push_back(records[i]);
  }
  return out;
}

Signal synth_ecg(std::uint64_t seed, double duration_s, double fs, double bpm,
                 std::int64_t leads) {
  require(fs >= 100.0, "synth_ecg: fs must be >= 100");
  require(bpm >= 30.0 && bpm <= 220.0, "synth_ecg: bpm must be in [30, 220]");
  require(leads >= 1, "synth_ecg: need at least one lead");
  require(duration_s > 0.0, "synth_ecg: duration must be positive");

  const std::int64_t n = std::llround(duration_s * fs);
  require(n >= 2, "synth_ecg: duration too short for the sample rate");
  Rng rng(seed);

  std::vector<double> lead_scale(static_cast<std::size_t>(leads));
  for (auto& s : lead_scale) s = rng.uniform(0.6, 1.3);

  // Five-bump beat template; offsets ride the beat period, widths are
  // absolute so the complex keeps its shape across heart rates.
  const double rr = 60.0 / bpm;
  const double off[5] = {-0.20 * rr, -0.05 * rr, 0.0, 0.05 * rr, 0.30 * rr};
  const double width[5] = {0.05, 0.015, 0.02, 0.02, 0.08};
  const double amp[5] = {0.15, -0.10, 1.00, -0.20, 0.30};

  std::vector<double> mono(static_cast<std::size_t>(n), 0.0);
  double t_beat = 0.5 * rr;
  while (t_beat < duration_s + 0.5 * rr) {
    for (int k = 0; k < 5; ++k) {
      const double center = t_beat + off[k];
      const double half_window = 4.0 * width[k];
      const std::int64_t i0 = std::max<std::int64_t>(
          0, std::llround((center - half_window) * fs));
      const std::int64_t i1 =
          std::min<std::int64_t>(n - 1, std::llround((center + half_window) * fs));
      for (std::int64_t i = i0; i <= i1; ++i) {
        const double dt = i / fs - center;
        mono[i] += amp[k] * std::exp(-dt * dt / (2.0 * width[k] * width[k]));
      }
    }
    t_beat += rr * (1.0 + 0.05 * rng.uniform(-1.0, 1.0));
  }

  Signal out(leads, n, fs);
  for (std::int64_t c = 0; c < leads; ++c)
    for (std::int64_t i = 0; i < n; ++i)
      out.at(c, i) = lead_scale[static_cast<std::size_t>(c)] *
                     mono[static_cast<std::size_t>(i)];
  return out;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void add_baseline_wander(std::vector<double>& x, double fs, Rng& rng) {
  for (int k = 0; k < 3; ++k) {
    const double f = rng.uniform(0.05, 0.45);
    const double a = rng.uniform(0.5, 1.0);
    const double phase = rng.uniform(0.0, kTwoPi);
    const double drift_amp = rng.uniform(0.5, 2.0);
    const double drift_f = rng.uniform(0.005, 0.02);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double t = static_cast<double>(i) / fs;
      x[i] += a * std::sin(kTwoPi * f * t + phase +
                           drift_amp * std::sin(kTwoPi * drift_f * t));
    }
  }
}

void add_muscle_artifact(std::vector<double>& x, double fs, Rng& rng) {
  for (auto& v : x) v = rng.normal();
  const double hi = std::min(40.0, 0.45 * fs);
  const auto cascade = dsp::butterworth_bandpass(2, 5.0, hi, fs);
  x = dsp::filtfilt(cascade, x);
}

void add_electrode_motion(std::vector<double>& x, double fs, Rng& rng,
                          double duration_s) {
  const double rate = 0.4;  // bursts per second
  bool placed = false;
  double t = 0.0;
  const auto add_burst = [&](double t0) {
    const double tau = rng.uniform(0.08, 0.25);
    const double f_b = rng.uniform(2.0, 6.0);
    const double a = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    const double phase = rng.uniform(0.0, kTwoPi);
    const std::int64_t i0 = std::llround(t0 * fs);
    const std::int64_t i1 = std::min<std::int64_t>(
        static_cast<std::int64_t>(x.size()) - 1, std::llround((t0 + 8.0 * tau) * fs));
    for (std::int64_t i = std::max<std::int64_t>(0, i0); i <= i1; ++i) {
      const double dt = i / fs - t0;
      if (dt < 0) continue;
      x[static_cast<std::size_t>(i)] +=
          a * std::exp(-dt / tau) * std::sin(kTwoPi * f_b * dt + phase);
    }
  };
  while (true) {
    t += -std::log(1.0 - rng.uniform()) / rate;
    if (t >= duration_s) break;
    add_burst(t);
    placed = true;
  }
  if (!placed) add_burst(0.5 * duration_s);
  // Faint wideband floor: gaps between bursts must never be exactly silent,
  // or a window drawn from a gap has zero power and cannot be SNR-scaled.
  for (auto& v : x) v += 1e-2 * rng.normal();
}

}  // namespace

Signal synth_noise(dsp::NoiseKind kind, std::uint64_t seed, double duration_s,
                   double fs) {
  require(fs >= 50.0, "synth_noise: fs must be >= 50");
  require(duration_s > 0.0, "synth_noise: duration must be positive");
  const std::int64_t n = std::llround(duration_s * fs);
  require(n > 12, "synth_noise: duration too short to band-limit");

  Rng rng(seed);
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  switch (kind) {
    case dsp::NoiseKind::baseline_wander:
      add_baseline_wander(x, fs, rng);
      break;
    case dsp::NoiseKind::muscle_artifact:
      add_muscle_artifact(x, fs, rng);
      break;
    case dsp::NoiseKind::electrode_motion:
      add_electrode_motion(x, fs, rng, duration_s);
      break;
    default:
      throw ParameterError("synth_noise: unknown kind");
  }

  double power = 0.0;
  for (double v : x) power += v * v;
  const double rms = std::sqrt(power / static_cast<double>(n));
  if (!(rms > 0.0))
    throw ContractError("synth_noise: generated silence, cannot normalize");
  for (auto& v : x) v /= rms;

  Signal out(1, n, fs);
  out.data = std::move(x);
  return out;
}

dsp::NoiseBank make_noise_bank(std::uint64_t seed,
                               std::int64_t entries_per_kind,
                               double duration_s, double fs) {
  require(entries_per_kind >= 1, "make_noise_bank: need at least one entry");
  dsp::NoiseBank bank;
  const auto fill = [&](dsp::NoiseKind kind, std::vector<Signal>& pool) {
    for (std::int64_t e = 0; e < entries_per_kind; ++e)
      pool.push_back(synth_noise(
          kind,
          derive_seed(seed, static_cast<std::uint64_t>(kind) * 4096 +
                                static_cast<std::uint64_t>(e),
                      kTagNoise),
          duration_s, fs));
  };
  fill(dsp::NoiseKind::baseline_wander, bank.baseline_wander);
  fill(dsp::NoiseKind::muscle_artifact, bank.muscle_artifact);
  fill(dsp::NoiseKind::electrode_motion, bank.electrode_motion);
  return bank;
}

std::vector<Record> synth_records(std::uint64_t seed, std::int64_t count,
                                  double duration_s, double fs,
                                  std::int64_t leads) {
  require(count >= 1, "synth_records: need at least one record");
  std::vector<Record> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const std::uint64_t rec_seed =
        derive_seed(seed, static_cast<std::uint64_t>(i), kTagRecord);
    Rng meta_rng(derive_seed(rec_seed, 0));
    const double bpm = meta_rng.uniform(55.0, 95.0);
    Record rec;
    rec.meta.id = "rec" + std::to_string(i);
    rec.meta.fold = static_cast<int>(i % 10) + 1;
    rec.meta.path = rec.meta.id + ".f32";
    rec.signal = synth_ecg(derive_seed(rec_seed, 1), duration_s, fs, bpm, leads);
    rec.meta.leads = rec.signal.channels;
    rec.meta.sample_rate = rec.signal.sample_rate;
    rec.meta.samples = rec.signal.length();
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<SegmentPair> make_pairs(const std::vector<Record>& records,
                                    const PairConfig& cfg,
                                    const dsp::NoiseBank& bank,
                                    std::uint64_t seed) {
  require(cfg.decimation >= 1, "make_pairs: decimation must be >= 1");
  std::vector<SegmentPair> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Record& rec = records[i];
    const auto cascade = dsp::butterworth_bandpass(
        cfg.bp_order, cfg.bp_lo_hz, cfg.bp_hi_hz, rec.signal.sample_rate);
    Signal gt = dsp::filter_signal(cascade, rec.signal, true);

    const std::int64_t keep =
        gt.length() - gt.length() % cfg.decimation;
    if (keep < 2 * cfg.decimation)
      throw ParameterError("make_pairs: record " + rec.meta.id +
                           " too short after trimming");
    if (keep != gt.length()) {
      Signal trimmed(gt.channels, keep, gt.sample_rate);
      for (std::int64_t c = 0; c < gt.channels; ++c)
        for (std::int64_t s = 0; s < keep; ++s)
          trimmed.at(c, s) = gt.at(c, s);
      gt = std::move(trimmed);
    }

    SegmentPair pair;
    pair.id = rec.meta.id;
    pair.fold = rec.meta.fold;
    pair.hr_gt = gt;
    Signal lr = dsp::decimate_skip(gt, cfg.decimation);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), kTagCorrupt));
    pair.lr = dsp::corrupt(lr, bank, cfg.corrupt, rng, &pair.corruption);
    out.push_back(std::move(pair));
  }
  return out;
}

namespace {

json corruption_to_json(const dsp::CorruptionRecord& r) {
  return json{{"applied", r.applied},
              {"kind", static_cast<int>(r.kind)},
              {"entry", r.entry},
              {"snr_db", r.snr_db},
              {"offset", r.offset},
              {"scale", r.scale}};
}

dsp::CorruptionRecord corruption_from_json(const json& j) {
  dsp::CorruptionRecord r;
  r.applied = j.at("applied").get<bool>();
  r.kind = static_cast<dsp::NoiseKind>(j.at("kind").get<int>());
  r.entry = j.at("entry").get<std::int64_t>();
  r.snr_db = j.at("snr_db").get<double>();
  r.offset = j.at("offset").get<std::int64_t>();
  r.scale = j.at("scale").get<double>();
  return r;
}

}  // namespace

void save_pairs(const std::string& dir,
                const std::vector<SegmentPair>& pairs) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "pairs.jsonl", std::ios::trunc);
  if (!out) throw IoError("save_pairs: cannot open pairs.jsonl in " + dir);
  for (const auto& p : pairs) {
    const std::string lr_path = p.id + ".lr.f32";
    const std::string hr_path = p.id + ".hr.f32";
    write_raster((fs::path(dir) / lr_path).string(), p.lr);
    write_raster((fs::path(dir) / hr_path).string(), p.hr_gt);
    json row{{"id", p.id},
             {"fold", p.fold},
             {"leads", p.lr.channels},
             {"lr_rate", p.lr.sample_rate},
             {"lr_samples", p.lr.length()},
             {"hr_rate", p.hr_gt.sample_rate},
             {"hr_samples", p.hr_gt.length()},
             {"lr_path", lr_path},
             {"hr_path", hr_path},
             {"corruption", corruption_to_json(p.corruption)}};
    out << row.dump() << "\n";
  }
  if (!out) throw IoError("save_pairs: short write in " + dir);
}

std::vector<SegmentPair> load_pairs(const std::string& dir) {
  const fs::path index = fs::path(dir) / "pairs.jsonl";
  std::ifstream in(index);
  if (!in) throw IoError("load_pairs: cannot open " + index.string());
  std::vector<SegmentPair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("load_pairs: unparseable line in " + index.string() +
                    ": " + e.what());
    }
    try {
      SegmentPair p;
      p.id = j.at("id").get<std::string>();
      p.fold = j.at("fold").get<int>();
      const auto leads = j.at("leads").get<std::int64_t>();
      p.lr = read_raster((fs::path(dir) / j.at("lr_path").get<std::string>()).string(),
                         leads, j.at("lr_rate").get<double>(),
                         j.at("lr_samples").get<std::int64_t>());
      p.hr_gt = read_raster(
          (fs::path(dir) / j.at("hr_path").get<std::string>()).string(), leads,
          j.at("hr_rate").get<double>(), j.at("hr_samples").get<std::int64_t>());
      p.corruption = corruption_from_json(j.at("corruption"));
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw IoError("load_pairs: bad row in " + index.string() + ": " +
                    e.what());
    }
  }
  return out;
}

}  // namespace data
}  // namespace msecg
