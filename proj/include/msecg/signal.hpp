// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace msecg {

/// Multichannel sampled waveform. Data is channel-major: data[c * length + i].
struct Signal {
  std::int64_t channels = 0;
  double sample_rate = 0.0;
  std::vector<double> data;

  Signal() = default;
  Signal(std::int64_t channels_, std::int64_t length_, double sample_rate_);

  std::int64_t length() const {
    return channels > 0 ? static_cast<std::int64_t>(data.size()) / channels
                        : 0;
  }

  double& at(std::int64_t c, std::int64_t i) { return data[c * length() + i]; }
  double at(std::int64_t c, std::int64_t i) const {
    return data[c * length() + i];
  }

  // Throws ParameterError on empty/invalid layout, NonFiniteError on NaN/Inf.
  void validate(const char* what) const;
};

}  // namespace msecg
