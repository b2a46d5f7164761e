// SPDX-License-Identifier: Apache-2.0
#include <msecg/dsp.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <msecg/errors.hpp>
#include <msecg/interp.hpp>

namespace msecg {
namespace dsp {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// One DF2T pass over x, in place, with step-matched initial states so the
// filter starts in equilibrium with the first sample instead of at zero.
void pass_inplace(const BiquadCascade& c, std::vector<double>& x) {
  double scale = x.empty() ? 0.0 : x.front();
  for (const Biquad& s : c.sections) {
    const double gdc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    double s1 = (s.b1 + s.b2 - (s.a1 + s.a2) * gdc) * scale;
    double s2 = (s.b2 - s.a2 * gdc) * scale;
    for (double& v : x) {
      const double y = s.b0 * v + s1;
      s1 = s.b1 * v - s.a1 * y + s2;
      s2 = s.b2 * v - s.a2 * y;
      v = y;
    }
    scale *= gdc;
  }
}

}  // namespace

BiquadCascade butterworth_bandpass(int order, double lo_hz, double hi_hz,
                                   double fs) {
  if (order < 1) throw ParameterError("butterworth: order must be >= 1");
  if (!(fs > 0.0)) throw ParameterError("butterworth: bad sample rate");
  if (!(0.0 < lo_hz && lo_hz < hi_hz && hi_hz < fs / 2.0))
    throw ParameterError("butterworth: need 0 < lo < hi < fs/2, got [" +
                         std::to_string(lo_hz) + ", " + std::to_string(hi_hz) +
                         "] at fs " + std::to_string(fs));
  const int n = order;
  const double fs2 = 2.0 * fs;
  const double w_lo = fs2 * std::tan(kPi * lo_hz / fs);
  const double w_hi = fs2 * std::tan(kPi * hi_hz / fs);
  const double w0sq = w_lo * w_hi;
  const double bw = w_hi - w_lo;

  // Analog band-pass poles: each prototype pole p contributes the roots of
  // s^2 - bw*p*s + w0^2.
  std::vector<cd> apoles;
  apoles.reserve(2 * n);
  for (int k = 0; k < n; ++k) {
    const double theta = kPi * (2.0 * k + n + 1.0) / (2.0 * n);
    const cd p(std::cos(theta), std::sin(theta));
    const cd b = bw * p;
    const cd disc = std::sqrt(b * b - 4.0 * w0sq);
    apoles.push_back((b + disc) / 2.0);
    apoles.push_back((b - disc) / 2.0);
  }

  // Bilinear transform. The 2n zeros land at z = +1 and z = -1, n each.
  std::vector<cd> zpoles;
  zpoles.reserve(2 * n);
  cd denom(1.0, 0.0);
  for (const cd& q : apoles) {
    zpoles.push_back((fs2 + q) / (fs2 - q));
    denom *= (fs2 - q);
  }
  const cd kd_c = std::pow(bw * fs2, n) / denom;
  if (std::abs(kd_c.imag()) > 1e-9 * std::abs(kd_c.real()) ||
      kd_c.real() <= 0.0)
    throw ParameterError("butterworth: design collapsed to a non-real gain");
  const double g = std::pow(kd_c.real(), 1.0 / n);

  for (const cd& z : zpoles)
    if (std::abs(z) >= 1.0 - 1e-9)
      throw ParameterError("butterworth: unstable pole at |z| = " +
                           std::to_string(std::abs(z)));

  std::vector<cd> upper;
  std::vector<double> reals;
  for (const cd& z : zpoles) {
    if (z.imag() > 1e-10)
      upper.push_back(z);
    else if (z.imag() >= -1e-10)
      reals.push_back(z.real());
  }
  if (2 * upper.size() + reals.size() != static_cast<std::size_t>(2 * n) ||
      reals.size() % 2 != 0)
    throw ParameterError("butterworth: poles failed to pair into sections");

  BiquadCascade c;
  for (const cd& z : upper) {
    Biquad s;
    s.b0 = g;
    s.b2 = -g;
    s.a1 = -2.0 * z.real();
    s.a2 = std::norm(z);
    c.sections.push_back(s);
  }
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    Biquad s;
    s.b0 = g;
    s.b2 = -g;
    s.a1 = -(reals[i] + reals[i + 1]);
    s.a2 = reals[i] * reals[i + 1];
    c.sections.push_back(s);
  }
  return c;
}

std::complex<double> frequency_response(const BiquadCascade& c, double hz,
                                        double fs) {
  const cd z_inv = std::exp(cd(0.0, -2.0 * kPi * hz / fs));
  cd h(1.0, 0.0);
  for (const Biquad& s : c.sections) {
    const cd num = s.b0 + s.b1 * z_inv + s.b2 * z_inv * z_inv;
    const cd den = 1.0 + s.a1 * z_inv + s.a2 * z_inv * z_inv;
    h *= num / den;
  }
  return h;
}

std::vector<double> sosfilt(const BiquadCascade& c,
                            const std::vector<double>& x) {
  std::vector<double> y = x;
  for (const Biquad& s : c.sections) {
    double s1 = 0.0, s2 = 0.0;
    for (double& v : y) {
      const double out = s.b0 * v + s1;
      s1 = s.b1 * v - s.a1 * out + s2;
      s2 = s.b2 * v - s.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> filtfilt(const BiquadCascade& c,
                             const std::vector<double>& x) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  const std::int64_t pad = 6 * static_cast<std::int64_t>(c.sections.size());
  if (n <= pad)
    throw ParameterError("filtfilt: need more than " + std::to_string(pad) +
                         " samples, got " + std::to_string(n));
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::int64_t i = 0; i < pad; ++i)
    ext.push_back(2.0 * x[0] - x[pad - i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::int64_t i = 0; i < pad; ++i)
    ext.push_back(2.0 * x[n - 1] - x[n - 2 - i]);

  pass_inplace(c, ext);
  std::reverse(ext.begin(), ext.end());
  pass_inplace(c, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + pad, ext.begin() + pad + n);
}

Signal filter_signal(const BiquadCascade& c, const Signal& s,
                     bool zero_phase) {
  s.validate("filter_signal");
  Signal out = s;
  const std::int64_t len = s.length();
  for (std::int64_t ch = 0; ch < s.channels; ++ch) {
    std::vector<double> line(s.data.begin() + ch * len,
                             s.data.begin() + (ch + 1) * len);
    const std::vector<double> filtered =
        zero_phase ? filtfilt(c, line) : sosfilt(c, line);
    std::copy(filtered.begin(), filtered.end(), out.data.begin() + ch * len);
  }
  return out;
}

Signal decimate_skip(const Signal& s, std::int64_t factor) {
  s.validate("decimate_skip");
  if (factor < 1) throw ParameterError("decimate_skip: factor must be >= 1");
  const std::int64_t len = s.length();
  const std::int64_t lout = (len + factor - 1) / factor;
  Signal out(s.channels, lout, s.sample_rate / static_cast<double>(factor));
  for (std::int64_t ch = 0; ch < s.channels; ++ch)
    for (std::int64_t i = 0; i < lout; ++i)
      out.at(ch, i) = s.at(ch, i * factor);
  return out;
}

Signal li_upsample(const Signal& s, std::int64_t ratio) {
  s.validate("li_upsample");
  if (ratio < 1) throw ParameterError("li_upsample: ratio must be >= 1");
  const std::int64_t len = s.length();
  if (len < 2) throw ParameterError("li_upsample: need at least 2 samples");
  Signal out(s.channels, len * ratio, s.sample_rate * static_cast<double>(ratio));
  for (std::int64_t ch = 0; ch < s.channels; ++ch)
    li_upsample_line(s.data.data() + ch * len, len, ratio,
                     out.data.data() + ch * len * ratio);
  return out;
}

double signal_power(const Signal& s) {
  if (s.data.empty()) throw ParameterError("signal_power: empty signal");
  double acc = 0.0;
  for (const double v : s.data) acc += v * v;
  return acc / static_cast<double>(s.data.size());
}

double noise_scale_for_snr(double p_clean, double p_noise, double snr_db) {
  if (!(p_clean > 0.0) || !(p_noise > 0.0))
    throw ParameterError("noise_scale_for_snr: powers must be positive");
  return std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
}

const char* noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::baseline_wander: return "baseline_wander";
    case NoiseKind::muscle_artifact: return "muscle_artifact";
    case NoiseKind::electrode_motion: return "electrode_motion";
  }
  return "unknown";
}

const std::vector<Signal>& NoiseBank::pool(NoiseKind k) const {
  switch (k) {
    case NoiseKind::baseline_wander: return baseline_wander;
    case NoiseKind::muscle_artifact: return muscle_artifact;
    case NoiseKind::electrode_motion: return electrode_motion;
  }
  throw ConfigError("NoiseBank: unknown noise kind");
}

Signal corrupt(const Signal& clean, const NoiseBank& bank,
               const CorruptParams& p, Rng& rng, CorruptionRecord* rec) {
  clean.validate("corrupt");
  if (!(p.p_noise >= 0.0 && p.p_noise <= 1.0))
    throw ParameterError("corrupt: p_noise must be in [0, 1]");
  if (!(p.snr_lo_db <= p.snr_hi_db))
    throw ParameterError("corrupt: empty SNR range");
  CorruptionRecord r;
  if (rng.uniform() >= p.p_noise) {
    if (rec) *rec = r;
    return clean;
  }
  r.applied = true;
  r.kind = static_cast<NoiseKind>(rng.uniform_int(3));
  const auto& pool = bank.pool(r.kind);
  if (pool.empty())
    throw ConfigError(std::string("corrupt: empty noise pool for ") +
                      noise_kind_name(r.kind));
  r.entry = rng.uniform_int(static_cast<std::int64_t>(pool.size()));
  r.snr_db = rng.uniform(p.snr_lo_db, p.snr_hi_db);

  const Signal& noise = pool[r.entry];
  noise.validate("corrupt noise record");
  if (noise.channels != 1 && noise.channels != clean.channels)
    throw ParameterError("corrupt: noise must be mono or match the leads");
  if (std::abs(noise.sample_rate - clean.sample_rate) >
      1e-9 * clean.sample_rate)
    throw ParameterError("corrupt: noise sample rate differs from segment");
  const std::int64_t clen = clean.length();
  const std::int64_t nlen = noise.length();
  if (nlen < clen)
    throw ParameterError("corrupt: noise record shorter than the segment");
  r.offset = rng.uniform_int(nlen - clen + 1);

  Signal seg(clean.channels, clen, clean.sample_rate);
  for (std::int64_t ch = 0; ch < clean.channels; ++ch) {
    const std::int64_t src = noise.channels == 1 ? 0 : ch;
    for (std::int64_t i = 0; i < clen; ++i)
      seg.at(ch, i) = noise.at(src, r.offset + i);
  }
  r.scale =
      noise_scale_for_snr(signal_power(clean), signal_power(seg), r.snr_db);

  Signal out = clean;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] += r.scale * seg.data[i];
  if (rec) *rec = r;
  return out;
}

}  // namespace dsp
}  // namespace msecg
