// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include <msecg/tensor.hpp>

namespace msecg {
namespace ssm {

// B-bar from the step sizes: euler multiplies by delta, zoh integrates the
// matrix exponential over one step, ((exp(delta*a) - 1) / a) * b.
enum class DiscretizeMode { euler, zoh };

enum class ScanMode { sequential, parallel };

/// Per-block selective-scan parameters. E is the channel width entering the
/// projections, I the scanned channel count, S the state size per channel,
/// R the bottleneck width of the step-size projection.
template <typename T>
struct SsmParams {
  TensorPtr<T> a_log;     // [I, S], state matrix is -exp(a_log)
  TensorPtr<T> d_skip;    // [I]
  TensorPtr<T> w_b;       // [E, S]
  TensorPtr<T> w_c;       // [E, S]
  TensorPtr<T> w_dt_low;  // [E, R]
  TensorPtr<T> w_dt_up;   // [R, I]
  TensorPtr<T> dt_bias;   // [I]
};

template <typename T>
struct InputDependent {
  TensorPtr<T> delta;  // [L, I], strictly positive
  TensorPtr<T> b;      // [L, S]
  TensorPtr<T> c;      // [L, S]
};

// Projects x [L, E] into the input-conditioned step sizes and state
// projections. delta = softplus(x @ w_dt_low @ w_dt_up + dt_bias).
template <typename T>
InputDependent<T> input_dependent_params(const TensorPtr<T>& x,
                                         const SsmParams<T>& p);

// abar[l,i,s] = exp(delta[l,i] * a[i,s]). delta must be positive.
template <typename T>
TensorPtr<T> discretize_a(const TensorPtr<T>& delta, const TensorPtr<T>& a);

// bbar[l,i,s] per the chosen mode. delta must be positive. In euler mode `a`
// is accepted for signature symmetry and receives no gradient.
template <typename T>
TensorPtr<T> discretize_b(const TensorPtr<T>& delta, const TensorPtr<T>& b,
                          const TensorPtr<T>& a, DiscretizeMode mode);

// Raw recurrence h[l] = abar[l] * h[l-1] + bbar[l] * x[l] per (i, s) lane,
// h[-1] = 0. Layouts: abar/bbar/h [L, I, S], x [L, I].
template <typename T>
void scan_sequential_kernel(const T* abar, const T* bbar, const T* x,
                            std::int64_t l, std::int64_t i, std::int64_t s,
                            T* h);

// Same result via a work-efficient two-sweep prefix composition of affine
// maps, lanes statically partitioned over threads. Output is bitwise
// identical for every thread count (but may differ from the sequential
// kernel in the last bits, since products associate differently).
template <typename T>
void scan_parallel_kernel(const T* abar, const T* bbar, const T* x,
                          std::int64_t l, std::int64_t i, std::int64_t s,
                          int threads, T* h);

// Reverse-time adjoint of the scan + readout. dy is [L, I]; gradients are
// accumulated into any non-null d_* buffer. d_skip may be null when the
// readout skip term is not used (then d_dskip must be null too).
template <typename T>
void scan_backward_kernel(const T* abar, const T* bbar, const T* c,
                          const T* x, const T* d_skip, const T* h,
                          const T* dy, std::int64_t l, std::int64_t i,
                          std::int64_t s, T* d_abar, T* d_bbar, T* d_c,
                          T* d_x, T* d_dskip);

// Tape op: runs the scan, keeps h for the backward pass, and reads out
// y[l,i] = sum_s c[l,s] * h[l,i,s] + d_skip[i] * x[l,i].
template <typename T>
TensorPtr<T> ssm_scan(const TensorPtr<T>& abar, const TensorPtr<T>& bbar,
                      const TensorPtr<T>& c, const TensorPtr<T>& x,
                      const TensorPtr<T>& d_skip, ScanMode mode,
                      int threads = 1);

}  // namespace ssm
}  // namespace msecg
