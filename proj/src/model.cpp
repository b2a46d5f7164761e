// SPDX-License-Identifier: Apache-2.0
#include <msecg/model.hpp>

#include <cmath>
#include <string>

#include <msecg/ops.hpp>
#include <msecg/rng.hpp>

namespace msecg {
namespace model {

void ModelConfig::validate() const {
  if (use_pixel_shuffle == use_deconv)
    throw ConfigError("model: exactly one upsampling arm must be enabled");
  if (use_deconv && r != 10)
    throw ConfigError("model: the deconv arm upsamples 5x then 2x, r must be 10");
  if (leads < 1 || d < 1 || m < 0 || r < 1 || expand < 1 || d_state < 1)
    throw ConfigError("model: dimensions must be positive");
  if (conv_kernel_front % 2 == 0 || conv_kernel_head % 2 == 0)
    throw ConfigError("model: front/head kernels must be odd for same padding");
  if (mamba_conv_kernel < 1)
    throw ConfigError("model: mamba conv kernel must be >= 1");
  if (scan_threads < 1) throw ConfigError("model: scan_threads must be >= 1");
}

template <typename T>
TensorPtr<T> pixel_shuffle_1d(const TensorPtr<T>& x, std::int64_t r) {
  if (!x || x->shape.size() != 2)
    throw DimensionError("pixel_shuffle_1d: input must be rank 2");
  if (r < 1 || x->shape[0] % r != 0)
    throw DimensionError("pixel_shuffle_1d: channels " +
                         std::to_string(x->shape[0]) +
                         " not divisible by ratio " + std::to_string(r));
  const std::int64_t cin = x->shape[0], n = x->shape[1];
  const std::int64_t cout = cin / r;
  auto out = Tensor<T>::zeros({cout, n * r});
  for (std::int64_t c = 0; c < cout; ++c)
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < r; ++j)
        out->value[c * n * r + i * r + j] = x->value[(c * r + j) * n + i];
  check_finite(*out, "pixel_shuffle_1d");
  Tape<T>* tape = Tape<T>::current();
  if (!tape || !x->requires_grad) return out;
  out->requires_grad = true;
  out->ensure_grad();
  x->ensure_grad();
  tape->record([x, out, cout, n, r] {
    for (std::int64_t c = 0; c < cout; ++c)
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < r; ++j)
          x->grad[(c * r + j) * n + i] += out->grad[c * n * r + i * r + j];
  });
  return out;
}

template <typename T>
TensorPtr<T> pixel_unshuffle_1d(const TensorPtr<T>& x, std::int64_t r) {
  if (!x || x->shape.size() != 2)
    throw DimensionError("pixel_unshuffle_1d: input must be rank 2");
  if (r < 1 || x->shape[1] % r != 0)
    throw DimensionError("pixel_unshuffle_1d: length " +
                         std::to_string(x->shape[1]) +
                         " not divisible by ratio " + std::to_string(r));
  const std::int64_t c = x->shape[0], lout = x->shape[1];
  const std::int64_t n = lout / r;
  auto out = Tensor<T>::zeros({c * r, n});
  for (std::int64_t ci = 0; ci < c; ++ci)
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < r; ++j)
        out->value[(ci * r + j) * n + i] = x->value[ci * lout + i * r + j];
  check_finite(*out, "pixel_unshuffle_1d");
  Tape<T>* tape = Tape<T>::current();
  if (!tape || !x->requires_grad) return out;
  out->requires_grad = true;
  out->ensure_grad();
  x->ensure_grad();
  tape->record([x, out, c, n, r, lout] {
    for (std::int64_t ci = 0; ci < c; ++ci)
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < r; ++j)
          x->grad[ci * lout + i * r + j] += out->grad[(ci * r + j) * n + i];
  });
  return out;
}

template <typename T>
TensorPtr<T> mamba_block(const TensorPtr<T>& x, const MambaBlockParams<T>& p,
                         const ModelConfig& cfg) {
  auto u = ops::matmul(x, p.w_in_u);  // [L, E]
  auto z = ops::matmul(x, p.w_in_z);

  // Causal depthwise conv: left-pad by K-1, valid conv, one tap set per
  // channel, so position l sees only l-K+1..l.
  const std::int64_t k = cfg.mamba_conv_kernel;
  auto ut = ops::transpose2d(u);  // [E, L]
  auto padded = ops::pad_cols(ut, k - 1, 0);
  auto conved = ops::conv1d(padded, p.conv_w, p.conv_b, ops::Pad::valid,
                            cfg.d_inner());
  auto act = ops::silu(ops::transpose2d(conved));  // [L, E]

  auto inp = ssm::input_dependent_params(act, p.ssm);
  auto a = ops::neg(ops::exp(p.ssm.a_log));
  auto abar = ssm::discretize_a(inp.delta, a);
  auto bbar = ssm::discretize_b(inp.delta, inp.b, a, cfg.discretize);
  auto y = ssm::ssm_scan(abar, bbar, inp.c, act, p.ssm.d_skip, cfg.scan,
                         cfg.scan_threads);

  auto gated = ops::mul(y, ops::silu(z));
  auto out = ops::matmul(gated, p.w_out);
  return ops::add(out, x);
}

template <typename T>
TensorPtr<T> bidi_block(const TensorPtr<T>& x, const BidiBlockParams<T>& p,
                        const ModelConfig& cfg) {
  auto yf = mamba_block(x, p.fwd, cfg);
  auto yb = ops::reverse_rows(mamba_block(ops::reverse_rows(x), p.bwd, cfg));
  // Each direction added the residual once; drop the duplicate.
  return ops::sub(ops::add(yf, yb), x);
}

template <typename T>
TensorPtr<T> forward(const TensorPtr<T>& x, const ModelParams<T>& p,
                     const ModelConfig& cfg) {
  cfg.validate();
  if (!x || x->shape.size() != 2 || x->shape[0] != cfg.leads)
    throw DimensionError("forward: input must be [leads, L]");
  if (x->shape[1] < 2)
    throw DimensionError("forward: need at least 2 samples");

  auto h = ops::conv1d(x, p.front_w, p.front_b, ops::Pad::same);
  auto ht = ops::transpose2d(h);  // [L, D]
  for (const auto& blk : p.blocks) ht = bidi_block(ht, blk, cfg);
  auto hb = ops::transpose2d(ht);  // [D, L]

  TensorPtr<T> y;
  if (cfg.use_pixel_shuffle) {
    auto head = ops::conv1d(hb, p.head_w, p.head_b, ops::Pad::same);
    y = pixel_shuffle_1d(head, cfg.r);
  } else {
    auto t1 = ops::silu(ops::conv1d_transposed(hb, p.up1_w, p.up1_b, 5));
    y = ops::conv1d_transposed(t1, p.up2_w, p.up2_b, 2);
  }
  if (cfg.use_skip_connection)
    y = ops::add(y, ops::li_upsample_cols(x, cfg.r));
  return y;
}

std::int64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::int64_t d = cfg.d, e = cfg.d_inner(), s = cfg.d_state,
                     r = cfg.dt_rank(), k = cfg.mamba_conv_kernel;
  const std::int64_t per_dir = 2 * d * e          // in/gate projections
                               + e * k + e        // depthwise conv
                               + e * s + e        // a_log, d_skip
                               + 2 * e * s        // w_b, w_c
                               + e * r + r * e + e  // step-size projection
                               + e * d;           // out projection
  std::int64_t total = cfg.d * cfg.leads * cfg.conv_kernel_front + cfg.d;
  total += cfg.m * 2 * per_dir;
  if (cfg.use_pixel_shuffle) {
    total += cfg.leads * cfg.r * cfg.d * cfg.conv_kernel_head +
             cfg.leads * cfg.r;
  } else {
    total += d * d * 5 + d + d * cfg.leads * 2 + cfg.leads;
  }
  return total;
}

template <typename T>
std::vector<std::pair<std::string, TensorPtr<T>>> named_tensors(
    const ModelParams<T>& p) {
  std::vector<std::pair<std::string, TensorPtr<T>>> out;
  out.emplace_back("front.w", p.front_w);
  out.emplace_back("front.b", p.front_b);
  for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
    const auto add_dir = [&](const char* dir, const MambaBlockParams<T>& mb) {
      const std::string base =
          "block" + std::to_string(bi) + "." + dir + ".";
      out.emplace_back(base + "w_in_u", mb.w_in_u);
      out.emplace_back(base + "w_in_z", mb.w_in_z);
      out.emplace_back(base + "conv_w", mb.conv_w);
      out.emplace_back(base + "conv_b", mb.conv_b);
      out.emplace_back(base + "a_log", mb.ssm.a_log);
      out.emplace_back(base + "d_skip", mb.ssm.d_skip);
      out.emplace_back(base + "w_b", mb.ssm.w_b);
      out.emplace_back(base + "w_c", mb.ssm.w_c);
      out.emplace_back(base + "w_dt_low", mb.ssm.w_dt_low);
      out.emplace_back(base + "w_dt_up", mb.ssm.w_dt_up);
      out.emplace_back(base + "dt_bias", mb.ssm.dt_bias);
      out.emplace_back(base + "w_out", mb.w_out);
    };
    add_dir("fwd", p.blocks[bi].fwd);
    add_dir("bwd", p.blocks[bi].bwd);
  }
  if (p.head_w) {
    out.emplace_back("head.w", p.head_w);
    out.emplace_back("head.b", p.head_b);
  }
  if (p.up1_w) {
    out.emplace_back("up1.w", p.up1_w);
    out.emplace_back("up1.b", p.up1_b);
    out.emplace_back("up2.w", p.up2_w);
    out.emplace_back("up2.b", p.up2_b);
  }
  return out;
}

template <typename T>
std::int64_t count_params(const ModelParams<T>& p) {
  std::int64_t total = 0;
  for (const auto& [name, t] : named_tensors(p)) total += t->size();
  return total;
}

namespace {

template <typename T>
TensorPtr<T> uniform_weight(Shape shape, std::int64_t fan_in,
                            std::uint64_t seed, std::uint64_t index) {
  auto t = Tensor<T>::zeros(std::move(shape), true);
  Rng rng(derive_seed(seed, index));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t->value)
    v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
TensorPtr<T> zero_param(Shape shape) {
  return Tensor<T>::zeros(std::move(shape), true);
}

}  // namespace

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::int64_t d = cfg.d, e = cfg.d_inner(), s = cfg.d_state,
                     r = cfg.dt_rank(), k = cfg.mamba_conv_kernel;
  std::uint64_t index = 0;
  ModelParams<T> p;
  p.front_w = uniform_weight<T>({d, cfg.leads, cfg.conv_kernel_front},
                                cfg.leads * cfg.conv_kernel_front, seed,
                                index++);
  p.front_b = zero_param<T>({d});
  ++index;

  for (std::int64_t bi = 0; bi < cfg.m; ++bi) {
    BidiBlockParams<T> blk;
    for (MambaBlockParams<T>* dir : {&blk.fwd, &blk.bwd}) {
      dir->w_in_u = uniform_weight<T>({d, e}, d, seed, index++);
      dir->w_in_z = uniform_weight<T>({d, e}, d, seed, index++);
      dir->conv_w = uniform_weight<T>({e, 1, k}, k, seed, index++);
      dir->conv_b = zero_param<T>({e});
      ++index;
      // State rows follow -1, -2, ..., -S through a = -exp(a_log).
      dir->ssm.a_log = zero_param<T>({e, s});
      for (std::int64_t ei = 0; ei < e; ++ei)
        for (std::int64_t si = 0; si < s; ++si)
          dir->ssm.a_log->value[ei * s + si] =
              static_cast<T>(std::log(static_cast<double>(si + 1)));
      ++index;
      dir->ssm.d_skip = Tensor<T>::full({e}, T(1), true);
      ++index;
      dir->ssm.w_b = uniform_weight<T>({e, s}, e, seed, index++);
      dir->ssm.w_c = uniform_weight<T>({e, s}, e, seed, index++);
      dir->ssm.w_dt_low = uniform_weight<T>({e, r}, e, seed, index++);
      dir->ssm.w_dt_up = uniform_weight<T>({r, e}, r, seed, index++);
      // Bias chosen so softplus lands on a log-uniform step in [1e-3, 1e-1].
      dir->ssm.dt_bias = zero_param<T>({e});
      {
        Rng rng(derive_seed(seed, index++));
        for (auto& v : dir->ssm.dt_bias->value) {
          const double dt =
              std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
          v = static_cast<T>(std::log(std::expm1(dt)));
        }
      }
      dir->w_out = uniform_weight<T>({e, d}, e, seed, index++);
    }
    p.blocks.push_back(std::move(blk));
  }

  if (cfg.use_pixel_shuffle) {
    p.head_w = uniform_weight<T>({cfg.leads * cfg.r, d, cfg.conv_kernel_head},
                                 d * cfg.conv_kernel_head, seed, index++);
    p.head_b = zero_param<T>({cfg.leads * cfg.r});
    ++index;
  } else {
    p.up1_w = uniform_weight<T>({d, d, 5}, d * 5, seed, index++);
    p.up1_b = zero_param<T>({d});
    ++index;
    p.up2_w = uniform_weight<T>({d, cfg.leads, 2}, d * 2, seed, index++);
    p.up2_b = zero_param<T>({cfg.leads});
    ++index;
  }
  return p;
}

#define MSECG_INSTANTIATE_MODEL(T)                                           \
  template TensorPtr<T> pixel_shuffle_1d<T>(const TensorPtr<T>&,             \
                                            std::int64_t);                   \
  template TensorPtr<T> pixel_unshuffle_1d<T>(const TensorPtr<T>&,           \
                                              std::int64_t);                 \
  template TensorPtr<T> mamba_block<T>(const TensorPtr<T>&,                  \
                                       const MambaBlockParams<T>&,           \
                                       const ModelConfig&);                  \
  template TensorPtr<T> bidi_block<T>(const TensorPtr<T>&,                   \
                                      const BidiBlockParams<T>&,             \
                                      const ModelConfig&);                   \
  template TensorPtr<T> forward<T>(const TensorPtr<T>&,                      \
                                   const ModelParams<T>&,                    \
                                   const ModelConfig&);                      \
  template std::vector<std::pair<std::string, TensorPtr<T>>>                 \
  named_tensors<T>(const ModelParams<T>&);                                   \
  template std::int64_t count_params<T>(const ModelParams<T>&);              \
  template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);

MSECG_INSTANTIATE_MODEL(float)
MSECG_INSTANTIATE_MODEL(double)

#undef MSECG_INSTANTIATE_MODEL

}  // namespace model
}  // namespace msecg
