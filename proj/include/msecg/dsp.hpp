// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include <msecg/rng.hpp>
#include <msecg/signal.hpp>

namespace msecg {
namespace dsp {

/// One second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
};

// Band-pass Butterworth of the given order per edge, designed by bilinear
// transform with pre-warped cutoffs, returned as second-order sections.
// Requires 0 < lo_hz < hi_hz < fs/2 and order >= 1; every digital pole must
// land strictly inside the unit circle.
BiquadCascade butterworth_bandpass(int order, double lo_hz, double hi_hz,
                                   double fs);

// Complex gain of the cascade at `hz` for sample rate `fs`.
std::complex<double> frequency_response(const BiquadCascade& c, double hz,
                                        double fs);

// Single causal pass, zero initial state.
std::vector<double> sosfilt(const BiquadCascade& c,
                            const std::vector<double>& x);

// Zero-phase filtering: odd-reflection padding, forward pass, backward pass,
// both started from step-matched initial states. Needs
// x.size() > 6 * sections.
std::vector<double> filtfilt(const BiquadCascade& c,
                             const std::vector<double>& x);

// Applies the cascade to every channel. zero_phase selects filtfilt,
// otherwise one causal pass.
Signal filter_signal(const BiquadCascade& c, const Signal& s, bool zero_phase);

// Keeps every factor-th sample starting at index 0, no anti-alias filter;
// content above the new Nyquist folds back deliberately.
Signal decimate_skip(const Signal& s, std::int64_t factor);

// Linear-interpolation upsampling by an integer ratio; the samples past the
// final anchor hold its value. Needs at least 2 samples per channel.
Signal li_upsample(const Signal& s, std::int64_t ratio);

// Mean square over all channels and samples.
double signal_power(const Signal& s);

// Amplitude a such that mixing clean + a*noise lands at snr_db exactly:
// a = sqrt(p_clean / (p_noise * 10^(snr_db/10))). Zero powers are rejected.
double noise_scale_for_snr(double p_clean, double p_noise, double snr_db);

enum class NoiseKind : int {
  baseline_wander = 0,
  muscle_artifact = 1,
  electrode_motion = 2,
};

const char* noise_kind_name(NoiseKind k);

/// Pools of real or synthesized noise records, one vector per kind.
struct NoiseBank {
  std::vector<Signal> baseline_wander;
  std::vector<Signal> muscle_artifact;
  std::vector<Signal> electrode_motion;

  const std::vector<Signal>& pool(NoiseKind k) const;
};

struct CorruptParams {
  double p_noise = 0.5;
  double snr_lo_db = -5.0;
  double snr_hi_db = 15.0;
};

/// What a corrupt() call decided, for reproducibility audits.
struct CorruptionRecord {
  bool applied = false;
  NoiseKind kind = NoiseKind::baseline_wander;
  std::int64_t entry = -1;
  double snr_db = 0.0;
  std::int64_t offset = -1;
  double scale = 0.0;
};

// Draw order is fixed: apply?, kind, pool entry, target SNR, segment offset.
// Unapplied calls return the input unchanged and consume exactly one draw.
// Single-channel noise is broadcast to every lead; the SNR is measured over
// the full multichannel segment.
Signal corrupt(const Signal& clean, const NoiseBank& bank,
               const CorruptParams& p, Rng& rng,
               CorruptionRecord* rec = nullptr);

}  // namespace dsp
}  // namespace msecg
