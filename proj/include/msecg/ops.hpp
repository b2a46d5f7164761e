// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include <msecg/tensor.hpp>

namespace msecg {
namespace ops {

enum class Pad { same, valid };

// Every op validates shapes (DimensionError), checks the output for NaN/Inf
// (NonFiniteError) and records a backward closure when a Tape<T> is current
// and any input requires grad. Inputs are captured by shared_ptr, so they
// outlive the tape replay.

template <typename T>
TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b);

// x: [Cin, L], w: [Cout, Cin/groups, k], bias: [Cout] or nullptr.
// Pad::same keeps L (k must be odd); Pad::valid gives L-k+1 (k<=L).
template <typename T>
TensorPtr<T> conv1d(const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& bias, Pad pad,
                    std::int64_t groups = 1);

// x: [Cin, L], w: [Cin, Cout, k], bias: [Cout] or nullptr.
// Output length (L-1)*stride + k.
template <typename T>
TensorPtr<T> conv1d_transposed(const TensorPtr<T>& x, const TensorPtr<T>& w,
                               const TensorPtr<T>& bias, std::int64_t stride);

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b);

template <typename T>
TensorPtr<T> scale(const TensorPtr<T>& x, T c);

// x: [L, N] plus a length-N bias added to every row.
template <typename T>
TensorPtr<T> add_bias_rows(const TensorPtr<T>& x, const TensorPtr<T>& b);

template <typename T>
TensorPtr<T> silu(const TensorPtr<T>& x);
template <typename T>
TensorPtr<T> sigmoid(const TensorPtr<T>& x);
template <typename T>
TensorPtr<T> softplus(const TensorPtr<T>& x);
// exp clamps its argument at a large cap (700 for double, 80 for float) with
// zero derivative past the cap, so overflow cannot poison a training run.
template <typename T>
TensorPtr<T> exp(const TensorPtr<T>& x);
template <typename T>
TensorPtr<T> neg(const TensorPtr<T>& x);

template <typename T>
TensorPtr<T> sum(const TensorPtr<T>& x);
template <typename T>
TensorPtr<T> mean(const TensorPtr<T>& x);

template <typename T>
TensorPtr<T> transpose2d(const TensorPtr<T>& x);

// Reverses the row order of [L, N] (time reversal for row-major sequences).
template <typename T>
TensorPtr<T> reverse_rows(const TensorPtr<T>& x);

// Zero-pads columns of [C, L] on the left/right.
template <typename T>
TensorPtr<T> pad_cols(const TensorPtr<T>& x, std::int64_t left,
                      std::int64_t right);

// Linear-interpolation upsample of each row of [C, L] by integer ratio;
// output [C, L*ratio]. Matches li_upsample_line exactly.
template <typename T>
TensorPtr<T> li_upsample_cols(const TensorPtr<T>& x, std::int64_t ratio);

}  // namespace ops
}  // namespace msecg
