// SPDX-License-Identifier: Apache-2.0
#include <msecg/signal.hpp>

#include <cmath>
#include <string>

#include <msecg/errors.hpp>

namespace msecg {

Signal::Signal(std::int64_t channels_, std::int64_t length_,
               double sample_rate_)
    : channels(channels_), sample_rate(sample_rate_) {
  if (channels_ < 1 || length_ < 1)
    throw ParameterError("Signal: channels and length must be positive");
  data.assign(static_cast<std::size_t>(channels_ * length_), 0.0);
}

void Signal::validate(const char* what) const {
  if (channels < 1 || data.empty() ||
      static_cast<std::int64_t>(data.size()) % channels != 0)
    throw ParameterError(std::string(what) + ": malformed signal layout");
  if (!(sample_rate > 0.0))
    throw ParameterError(std::string(what) + ": sample rate must be positive");
  for (const double v : data)
    if (!std::isfinite(v))
      throw NonFiniteError(std::string(what) + ": non-finite sample");
}

}  // namespace msecg
