// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <msecg/dsp.hpp>
#include <msecg/rng.hpp>
#include <msecg/signal.hpp>

namespace msecg {
namespace data {

/// One row of a dataset manifest. `path` is resolved relative to the
/// manifest file's directory unless absolute.
struct RecordManifest {
  std::string id;
  int fold = 1;  // 1..10
  std::int64_t leads = 0;
  double sample_rate = 0.0;
  std::int64_t samples = 0;
  std::string path;
};

struct Record {
  RecordManifest meta;
  Signal signal;
};

/// Low-rate input, high-rate ground truth and the corruption applied to the
/// input (applied=false means the input is the clean decimation).
struct SegmentPair {
  std::string id;
  int fold = 1;
  Signal lr;
  Signal hr_gt;
  dsp::CorruptionRecord corruption;
};

// Raw little-endian 32-bit floats, channel-major. Values are quantized to
// float on write; loading widens back to double.
void write_raster(const std::string& path, const Signal& s);
Signal read_raster(const std::string& path, std::int64_t channels,
                   double sample_rate, std::int64_t samples);

// JSON-lines manifest; one record per line. Unknown keys are ignored on
// load so label metadata can ride along.
void write_manifest(const std::string& path,
                    const std::vector<RecordManifest>& records);
std::vector<RecordManifest> load_manifest(const std::string& path);

// Loads every record in the manifest, validating that each raster file's
// byte size matches the declared shape exactly.
std::vector<Record> load_dataset(const std::string& manifest_path);

// Writes rasters next to the manifest and the manifest itself.
void save_dataset(const std::string& dir, const std::vector<Record>& records,
                  const std::string& manifest_name = "manifest.jsonl");

/// Index partition by fold: train 1..8, validation 9, test 10.
struct FoldSplit {
  std::vector<std::size_t> train, val, test;
};

FoldSplit split_folds(const std::vector<RecordManifest>& records);

std::vector<Record> select_records(const std::vector<Record>& records,
                                   const std::vector<std::size_t>& idx);

// Synthetic multi-lead ECG: per beat a fixed five-bump Gaussian complex,
// beat spacing 60/bpm jittered +-5%, one amplitude scale per lead.
// Requires fs >= 100 and bpm in [30, 220].
Signal synth_ecg(std::uint64_t seed, double duration_s, double fs, double bpm,
                 std::int64_t leads);

// Synthetic single-channel noise, unit RMS:
//   baseline_wander   sum of three slow sinusoids (< 0.5 Hz), drifting phase
//   muscle_artifact   white noise band-passed 5..min(40, 0.45*fs) Hz
//   electrode_motion  Poisson-arriving damped oscillation bursts
// Requires fs >= 50 and duration_s > 0.
Signal synth_noise(dsp::NoiseKind kind, std::uint64_t seed, double duration_s,
                   double fs);

// Bank of freshly synthesized noise, entries_per_kind signals per kind, all
// at `fs` and `duration_s` long. Entry seeds derive from (seed, kind, entry)
// so the bank is reproducible independent of call order.
dsp::NoiseBank make_noise_bank(std::uint64_t seed,
                               std::int64_t entries_per_kind,
                               double duration_s, double fs);

// Synthesizes `count` records, folds assigned round-robin 1..10, heart rate
// drawn per record from [55, 95] bpm.
std::vector<Record> synth_records(std::uint64_t seed, std::int64_t count,
                                  double duration_s, double fs,
                                  std::int64_t leads);

struct PairConfig {
  int bp_order = 2;
  double bp_lo_hz = 1.0;
  double bp_hi_hz = 45.0;
  std::int64_t decimation = 10;
  dsp::CorruptParams corrupt;  // p_noise 0 disables corruption entirely
};

// Band-pass each record (zero phase) into the ground truth, decimate into
// the low-rate input, then corrupt the input per the noise protocol with a
// per-record rng seeded from (seed, record index). Records are trimmed to a
// multiple of the decimation factor. The bank may be empty when
// corrupt.p_noise == 0.
std::vector<SegmentPair> make_pairs(const std::vector<Record>& records,
                                    const PairConfig& cfg,
                                    const dsp::NoiseBank& bank,
                                    std::uint64_t seed);

// Pair-set persistence: `pairs.jsonl` plus one raster pair per segment in
// `dir`. Loading restores signals and corruption records.
void save_pairs(const std::string& dir,
                const std::vector<SegmentPair>& pairs);
std::vector<SegmentPair> load_pairs(const std::string& dir);

}  // namespace data
}  // namespace msecg
