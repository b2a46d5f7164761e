// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <msecg/ssm.hpp>
#include <msecg/tensor.hpp>

namespace msecg {
namespace model {

/// Architecture and runtime knobs. Defaults are the full-scale model; tests
/// and quick runs shrink d/m. Exactly one of use_pixel_shuffle/use_deconv
/// must be set; the deconv arm upsamples 5x then 2x, so it requires r == 10.
struct ModelConfig {
  std::int64_t leads = 12;
  std::int64_t d = 160;
  std::int64_t m = 5;
  std::int64_t r = 10;
  std::int64_t expand = 2;
  std::int64_t d_state = 16;
  std::int64_t conv_kernel_front = 7;
  std::int64_t conv_kernel_head = 3;
  std::int64_t mamba_conv_kernel = 4;
  bool use_pixel_shuffle = true;
  bool use_skip_connection = true;
  bool use_deconv = false;
  ssm::DiscretizeMode discretize = ssm::DiscretizeMode::euler;
  ssm::ScanMode scan = ssm::ScanMode::sequential;
  int scan_threads = 1;

  std::int64_t d_inner() const { return expand * d; }
  std::int64_t dt_rank() const { return (d_inner() + 15) / 16; }

  // Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// One direction of a block: in/gate projections, causal depthwise conv,
/// selective scan, out projection.
template <typename T>
struct MambaBlockParams {
  TensorPtr<T> w_in_u;  // [D, E]
  TensorPtr<T> w_in_z;  // [D, E]
  TensorPtr<T> conv_w;  // [E, 1, K]
  TensorPtr<T> conv_b;  // [E]
  ssm::SsmParams<T> ssm;
  TensorPtr<T> w_out;  // [E, D]
};

template <typename T>
struct BidiBlockParams {
  MambaBlockParams<T> fwd, bwd;
};

template <typename T>
struct ModelParams {
  TensorPtr<T> front_w;  // [D, leads, k_front]
  TensorPtr<T> front_b;  // [D]
  std::vector<BidiBlockParams<T>> blocks;
  TensorPtr<T> head_w;  // [leads*r, D, k_head] (pixel-shuffle arm)
  TensorPtr<T> head_b;  // [leads*r]
  TensorPtr<T> up1_w;   // [D, D, 5] (deconv arm)
  TensorPtr<T> up1_b;   // [D]
  TensorPtr<T> up2_w;   // [D, leads, 2]
  TensorPtr<T> up2_b;   // [leads]
};

// out[c, n*r + j] = in[c*r + j, n]; input channels must divide by r.
template <typename T>
TensorPtr<T> pixel_shuffle_1d(const TensorPtr<T>& x, std::int64_t r);

// Exact inverse of pixel_shuffle_1d.
template <typename T>
TensorPtr<T> pixel_unshuffle_1d(const TensorPtr<T>& x, std::int64_t r);

// x: [L, D] -> [L, D], one direction, residual added inside.
template <typename T>
TensorPtr<T> mamba_block(const TensorPtr<T>& x, const MambaBlockParams<T>& p,
                         const ModelConfig& cfg);

// Forward pass plus a time-reversed pass, summed with one shared residual.
template <typename T>
TensorPtr<T> bidi_block(const TensorPtr<T>& x, const BidiBlockParams<T>& p,
                        const ModelConfig& cfg);

// x: [leads, L] -> [leads, L * r].
template <typename T>
TensorPtr<T> forward(const TensorPtr<T>& x, const ModelParams<T>& p,
                     const ModelConfig& cfg);

// Closed-form trainable parameter count for the configuration.
std::int64_t count_params(const ModelConfig& cfg);

// Actual element count over all tensors in the parameter struct.
template <typename T>
std::int64_t count_params(const ModelParams<T>& p);

// Canonical enumeration used by initialization, checkpointing and counting.
template <typename T>
std::vector<std::pair<std::string, TensorPtr<T>>> named_tensors(
    const ModelParams<T>& p);

// Deterministic init: weights U(-1/sqrt(fan_in), +1/sqrt(fan_in)) from a
// per-tensor derived seed, biases zero, state rows log(1)..log(S), skip
// gains one, and step-size biases softplus-inverted from log-uniform steps
// in [1e-3, 1e-1]. All tensors require grad.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace model
}  // namespace msecg
