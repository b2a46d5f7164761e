// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace msecg {

// Linear-interpolation upsampling of one line. Anchors sit at indices
// i * ratio; samples past the final anchor hold its value, so the output
// length is exactly n * ratio. Shared by the signal-level and tensor-level
// upsamplers so the two paths are bit-identical.
template <typename T>
void li_upsample_line(const T* src, std::int64_t n, std::int64_t ratio,
                      T* dst) {
  for (std::int64_t i = 0; i < n; ++i) {
    const T x0 = src[i];
    if (i + 1 < n) {
      const T step = (src[i + 1] - x0) / static_cast<T>(ratio);
      for (std::int64_t j = 0; j < ratio; ++j) {
        dst[i * ratio + j] = x0 + step * static_cast<T>(j);
      }
    } else {
      for (std::int64_t j = 0; j < ratio; ++j) {
        dst[i * ratio + j] = x0;
      }
    }
  }
}

}  // namespace msecg
