// SPDX-License-Identifier: Apache-2.0
#include <msecg/ops.hpp>

#include <cmath>
#include <string>
#include <type_traits>

#include <msecg/interp.hpp>

namespace msecg {
namespace ops {

namespace {

template <typename T>
void require_rank2(const TensorPtr<T>& x, const char* op) {
  if (!x || x->shape.size() != 2)
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " +
                         (x ? shape_str(x->shape) : std::string("null")));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Finishes an op: finite check, then backward registration if a tape is
// active and any input wants grad. `ins` are the grad-receiving inputs.
template <typename T, typename Backward>
void finish(const TensorPtr<T>& out, const char* name,
            std::initializer_list<TensorPtr<T>> ins, Backward&& bw) {
  check_finite(*out, name);
  Tape<T>* tape = Tape<T>::current();
  if (!tape) return;
  bool any = false;
  for (const auto& in : ins) any = any || in->requires_grad;
  if (!any) return;
  out->requires_grad = true;
  out->ensure_grad();
  for (const auto& in : ins)
    if (in->requires_grad) in->ensure_grad();
  tape->record(std::forward<Backward>(bw));
}

}  // namespace

template <typename T>
TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::int64_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
  if (b->shape[0] != k)
    throw DimensionError("matmul: inner dims differ, " + shape_str(a->shape) +
                         " x " + shape_str(b->shape));
  auto out = Tensor<T>::zeros({m, n});
  const T* av = a->value.data();
  const T* bv = b->value.data();
  T* ov = out->value.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      if (aip == T(0)) continue;
      const T* brow = bv + p * n;
      T* orow = ov + i * n;
      for (std::int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  finish(out, "matmul", {a, b}, [a, b, out, m, k, n] {
    const T* g = out->grad.data();
    if (a->requires_grad) {
      T* ga = a->grad.data();
      const T* bv = b->value.data();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t p = 0; p < k; ++p) {
          T acc = T(0);
          for (std::int64_t j = 0; j < n; ++j)
            acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (b->requires_grad) {
      T* gb = b->grad.data();
      const T* av = a->value.data();
      for (std::int64_t p = 0; p < k; ++p)
        for (std::int64_t j = 0; j < n; ++j) {
          T acc = T(0);
          for (std::int64_t i = 0; i < m; ++i)
            acc += av[i * k + p] * g[i * n + j];
          gb[p * n + j] += acc;
        }
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> conv1d(const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& bias, Pad pad, std::int64_t groups) {
  require_rank2(x, "conv1d");
  if (!w || w->shape.size() != 3)
    throw DimensionError("conv1d: weight must be [out,in/groups,k]");
  const std::int64_t cin = x->shape[0], len = x->shape[1];
  const std::int64_t cout = w->shape[0], cig = w->shape[1], k = w->shape[2];
  if (groups < 1 || cin % groups != 0 || cout % groups != 0)
    throw DimensionError("conv1d: groups=" + std::to_string(groups) +
                         " does not divide channels");
  if (cig != cin / groups)
    throw DimensionError("conv1d: weight expects " + std::to_string(cig) +
                         " input channels per group, signal has " +
                         std::to_string(cin / groups));
  if (bias && (bias->shape.size() != 1 || bias->shape[0] != cout))
    throw DimensionError("conv1d: bias must be [out]");
  if (pad == Pad::same && k % 2 == 0)
    throw DimensionError("conv1d: same padding needs an odd kernel");
  if (pad == Pad::valid && k > len)
    throw DimensionError("conv1d: kernel longer than signal");
  const std::int64_t offset = pad == Pad::same ? (k - 1) / 2 : 0;
  const std::int64_t lout = pad == Pad::same ? len : len - k + 1;
  const std::int64_t cpg_out = cout / groups;
  auto out = Tensor<T>::zeros({cout, lout});
  for (std::int64_t oc = 0; oc < cout; ++oc) {
    const std::int64_t base = (oc / cpg_out) * cig;
    const T b0 = bias ? bias->value[oc] : T(0);
    for (std::int64_t t = 0; t < lout; ++t) {
      T acc = b0;
      for (std::int64_t ic = 0; ic < cig; ++ic) {
        const T* xrow = x->value.data() + (base + ic) * len;
        const T* wrow = w->value.data() + (oc * cig + ic) * k;
        for (std::int64_t j = 0; j < k; ++j) {
          const std::int64_t s = t + j - offset;
          if (s >= 0 && s < len) acc += xrow[s] * wrow[j];
        }
      }
      out->value[oc * lout + t] = acc;
    }
  }
  auto backward = [x, w, bias, out, len, cout, cig, k, offset, lout,
                   cpg_out] {
    const T* g = out->grad.data();
    for (std::int64_t oc = 0; oc < cout; ++oc) {
      const std::int64_t base = (oc / cpg_out) * cig;
      for (std::int64_t t = 0; t < lout; ++t) {
        const T gy = g[oc * lout + t];
        if (gy == T(0)) continue;
        for (std::int64_t ic = 0; ic < cig; ++ic) {
          for (std::int64_t j = 0; j < k; ++j) {
            const std::int64_t s = t + j - offset;
            if (s < 0 || s >= len) continue;
            if (x->requires_grad)
              x->grad[(base + ic) * len + s] +=
                  gy * w->value[(oc * cig + ic) * k + j];
            if (w->requires_grad)
              w->grad[(oc * cig + ic) * k + j] +=
                  gy * x->value[(base + ic) * len + s];
          }
        }
        if (bias && bias->requires_grad) bias->grad[oc] += gy;
      }
    }
  };
  if (bias)
    finish(out, "conv1d", {x, w, bias}, backward);
  else
    finish(out, "conv1d", {x, w}, backward);
  return out;
}

template <typename T>
TensorPtr<T> conv1d_transposed(const TensorPtr<T>& x, const TensorPtr<T>& w,
                               const TensorPtr<T>& bias, std::int64_t stride) {
  require_rank2(x, "conv1d_transposed");
  if (!w || w->shape.size() != 3)
    throw DimensionError("conv1d_transposed: weight must be [in,out,k]");
  if (stride < 1)
    throw DimensionError("conv1d_transposed: stride must be positive");
  const std::int64_t cin = x->shape[0], len = x->shape[1];
  const std::int64_t cout = w->shape[1], k = w->shape[2];
  if (w->shape[0] != cin)
    throw DimensionError("conv1d_transposed: weight wants " +
                         std::to_string(w->shape[0]) + " input channels, got " +
                         std::to_string(cin));
  if (bias && (bias->shape.size() != 1 || bias->shape[0] != cout))
    throw DimensionError("conv1d_transposed: bias must be [out]");
  const std::int64_t lout = (len - 1) * stride + k;
  auto out = Tensor<T>::zeros({cout, lout});
  for (std::int64_t oc = 0; oc < cout; ++oc) {
    T* orow = out->value.data() + oc * lout;
    if (bias)
      for (std::int64_t t = 0; t < lout; ++t) orow[t] = bias->value[oc];
    for (std::int64_t ic = 0; ic < cin; ++ic) {
      const T* xrow = x->value.data() + ic * len;
      const T* wrow = w->value.data() + (ic * cout + oc) * k;
      for (std::int64_t n = 0; n < len; ++n)
        for (std::int64_t j = 0; j < k; ++j)
          orow[n * stride + j] += xrow[n] * wrow[j];
    }
  }
  auto backward = [x, w, bias, out, cin, len, cout, k, stride, lout] {
    const T* g = out->grad.data();
    for (std::int64_t oc = 0; oc < cout; ++oc) {
      const T* grow = g + oc * lout;
      for (std::int64_t ic = 0; ic < cin; ++ic) {
        for (std::int64_t n = 0; n < len; ++n)
          for (std::int64_t j = 0; j < k; ++j) {
            const T gy = grow[n * stride + j];
            if (x->requires_grad)
              x->grad[ic * len + n] += gy * w->value[(ic * cout + oc) * k + j];
            if (w->requires_grad)
              w->grad[(ic * cout + oc) * k + j] += gy * x->value[ic * len + n];
          }
      }
      if (bias && bias->requires_grad) {
        T acc = T(0);
        for (std::int64_t t = 0; t < lout; ++t) acc += grow[t];
        bias->grad[oc] += acc;
      }
    }
  };
  if (bias)
    finish(out, "conv1d_transposed", {x, w, bias}, backward);
  else
    finish(out, "conv1d_transposed", {x, w}, backward);
  return out;
}

namespace {

template <typename T>
void require_same_shape(const TensorPtr<T>& a, const TensorPtr<T>& b,
                        const char* op) {
  if (!a || !b || a->shape != b->shape)
    throw DimensionError(std::string(op) + ": shapes differ, " +
                         shape_str(a->shape) + " vs " + shape_str(b->shape));
}

}  // namespace

template <typename T>
TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(a, b, "add");
  auto out = Tensor<T>::zeros(a->shape);
  for (std::int64_t i = 0; i < a->size(); ++i)
    out->value[i] = a->value[i] + b->value[i];
  finish(out, "add", {a, b}, [a, b, out] {
    for (std::int64_t i = 0; i < out->size(); ++i) {
      if (a->requires_grad) a->grad[i] += out->grad[i];
      if (b->requires_grad) b->grad[i] += out->grad[i];
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> sub(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(a, b, "sub");
  auto out = Tensor<T>::zeros(a->shape);
  for (std::int64_t i = 0; i < a->size(); ++i)
    out->value[i] = a->value[i] - b->value[i];
  finish(out, "sub", {a, b}, [a, b, out] {
    for (std::int64_t i = 0; i < out->size(); ++i) {
      if (a->requires_grad) a->grad[i] += out->grad[i];
      if (b->requires_grad) b->grad[i] -= out->grad[i];
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(a, b, "mul");
  auto out = Tensor<T>::zeros(a->shape);
  for (std::int64_t i = 0; i < a->size(); ++i)
    out->value[i] = a->value[i] * b->value[i];
  finish(out, "mul", {a, b}, [a, b, out] {
    for (std::int64_t i = 0; i < out->size(); ++i) {
      if (a->requires_grad) a->grad[i] += out->grad[i] * b->value[i];
      if (b->requires_grad) b->grad[i] += out->grad[i] * a->value[i];
    }
  });
  return out;
}

template <typename T>
TensorPtr<T> scale(const TensorPtr<T>& x, T c) {
  auto out = Tensor<T>::zeros(x->shape);
  for (std::int64_t i = 0; i < x->size(); ++i) out->value[i] = c * x->value[i];
  finish(out, "scale", {x}, [x, out, c] {
    for (std::int64_t i = 0; i < out->size(); ++i)
      x->grad[i] += c * out->grad[i];
  });
  return out;
}

template <typename T>
TensorPtr<T> add_bias_rows(const TensorPtr<T>& x, const TensorPtr<T>& b) {
  require_rank2(x, "add_bias_rows");
  if (!b || b->shape.size() != 1 || b->shape[0] != x->shape[1])
    throw DimensionError("add_bias_rows: bias " + shape_str(b->shape) +
                         " does not match row width of " +
                         shape_str(x->shape));
  const std::int64_t rows = x->shape[0], n = x->shape[1];
  auto out = Tensor<T>::zeros(x->shape);
  for (std::int64_t l = 0; l < rows; ++l)
    for (std::int64_t j = 0; j < n; ++j)
      out->value[l * n + j] = x->value[l * n + j] + b->value[j];
  finish(out, "add_bias_rows", {x, b}, [x, b, out, rows, n] {
    for (std::int64_t l = 0; l < rows; ++l)
      for (std::int64_t j = 0; j < n; ++j) {
        const T g = out->grad[l * n + j];
        if (x->requires_grad) x->grad[l * n + j] += g;
        if (b->requires_grad) b->grad[j] += g;
      }
  });
  return out;
}

namespace {

// Shared unary plumbing: fwd gives y(x), deriv gives dy/dx per element.
template <typename T, typename Fwd, typename Deriv>
TensorPtr<T> map_unary(const TensorPtr<T>& x, const char* name, Fwd fwd,
                       Deriv deriv) {
  auto out = Tensor<T>::zeros(x->shape);
  for (std::int64_t i = 0; i < x->size(); ++i)
    out->value[i] = fwd(x->value[i]);
  finish(out, name, {x}, [x, out, deriv] {
    for (std::int64_t i = 0; i < out->size(); ++i)
      x->grad[i] += out->grad[i] * deriv(x->value[i], out->value[i]);
  });
  return out;
}

}  // namespace

template <typename T>
TensorPtr<T> silu(const TensorPtr<T>& x) {
  return map_unary(
      x, "silu", [](T v) { return v * stable_sigmoid(v); },
      [](T v, T) {
        const T s = stable_sigmoid(v);
        return s * (T(1) + v * (T(1) - s));
      });
}

template <typename T>
TensorPtr<T> sigmoid(const TensorPtr<T>& x) {
  return map_unary(
      x, "sigmoid", [](T v) { return stable_sigmoid(v); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
TensorPtr<T> softplus(const TensorPtr<T>& x) {
  return map_unary(
      x, "softplus",
      [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) { return stable_sigmoid(v); });
}

template <typename T>
TensorPtr<T> exp(const TensorPtr<T>& x) {
  constexpr T cap = std::is_same_v<T, float> ? T(80) : T(700);
  return map_unary(
      x, "exp", [cap](T v) { return std::exp(std::min(v, cap)); },
      [cap](T v, T y) { return v < cap ? y : T(0); });
}

template <typename T>
TensorPtr<T> neg(const TensorPtr<T>& x) {
  return map_unary(
      x, "neg", [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
TensorPtr<T> sum(const TensorPtr<T>& x) {
  T acc = T(0);
  for (const T v : x->value) acc += v;
  auto out = Tensor<T>::from({}, {acc});
  finish(out, "sum", {x}, [x, out] {
    const T g = out->grad[0];
    for (std::int64_t i = 0; i < x->size(); ++i) x->grad[i] += g;
  });
  return out;
}

template <typename T>
TensorPtr<T> mean(const TensorPtr<T>& x) {
  if (x->size() == 0) throw DimensionError("mean of an empty tensor");
  T acc = T(0);
  for (const T v : x->value) acc += v;
  const T inv = T(1) / static_cast<T>(x->size());
  auto out = Tensor<T>::from({}, {acc * inv});
  finish(out, "mean", {x}, [x, out, inv] {
    const T g = out->grad[0] * inv;
    for (std::int64_t i = 0; i < x->size(); ++i) x->grad[i] += g;
  });
  return out;
}

template <typename T>
TensorPtr<T> transpose2d(const TensorPtr<T>& x) {
  require_rank2(x, "transpose2d");
  const std::int64_t m = x->shape[0], n = x->shape[1];
  auto out = Tensor<T>::zeros({n, m});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      out->value[j * m + i] = x->value[i * n + j];
  finish(out, "transpose2d", {x}, [x, out, m, n] {
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j)
        x->grad[i * n + j] += out->grad[j * m + i];
  });
  return out;
}

template <typename T>
TensorPtr<T> reverse_rows(const TensorPtr<T>& x) {
  require_rank2(x, "reverse_rows");
  const std::int64_t rows = x->shape[0], n = x->shape[1];
  auto out = Tensor<T>::zeros(x->shape);
  for (std::int64_t l = 0; l < rows; ++l)
    for (std::int64_t j = 0; j < n; ++j)
      out->value[l * n + j] = x->value[(rows - 1 - l) * n + j];
  finish(out, "reverse_rows", {x}, [x, out, rows, n] {
    for (std::int64_t l = 0; l < rows; ++l)
      for (std::int64_t j = 0; j < n; ++j)
        x->grad[(rows - 1 - l) * n + j] += out->grad[l * n + j];
  });
  return out;
}

template <typename T>
TensorPtr<T> pad_cols(const TensorPtr<T>& x, std::int64_t left,
                      std::int64_t right) {
  require_rank2(x, "pad_cols");
  if (left < 0 || right < 0) throw DimensionError("pad_cols: negative pad");
  const std::int64_t c = x->shape[0], len = x->shape[1];
  auto out = Tensor<T>::zeros({c, left + len + right});
  const std::int64_t lout = left + len + right;
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t i = 0; i < len; ++i)
      out->value[ch * lout + left + i] = x->value[ch * len + i];
  finish(out, "pad_cols", {x}, [x, out, c, len, left, lout] {
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < len; ++i)
        x->grad[ch * len + i] += out->grad[ch * lout + left + i];
  });
  return out;
}

template <typename T>
TensorPtr<T> li_upsample_cols(const TensorPtr<T>& x, std::int64_t ratio) {
  require_rank2(x, "li_upsample_cols");
  if (ratio < 1) throw DimensionError("li_upsample_cols: ratio must be >= 1");
  const std::int64_t c = x->shape[0], len = x->shape[1];
  if (len < 2)
    throw ParameterError("li_upsample_cols: need at least 2 samples per row");
  const std::int64_t lout = len * ratio;
  auto out = Tensor<T>::zeros({c, lout});
  for (std::int64_t ch = 0; ch < c; ++ch)
    li_upsample_line(x->value.data() + ch * len, len, ratio,
                     out->value.data() + ch * lout);
  finish(out, "li_upsample_cols", {x}, [x, out, c, len, ratio, lout] {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* g = out->grad.data() + ch * lout;
      T* gx = x->grad.data() + ch * len;
      for (std::int64_t i = 0; i + 1 < len; ++i)
        for (std::int64_t j = 0; j < ratio; ++j) {
          const T w = static_cast<T>(j) / static_cast<T>(ratio);
          gx[i] += g[i * ratio + j] * (T(1) - w);
          gx[i + 1] += g[i * ratio + j] * w;
        }
      for (std::int64_t j = 0; j < ratio; ++j)
        gx[len - 1] += g[(len - 1) * ratio + j];
    }
  });
  return out;
}

#define MSECG_INSTANTIATE_OPS(T)                                              \
  template TensorPtr<T> matmul<T>(const TensorPtr<T>&, const TensorPtr<T>&); \
  template TensorPtr<T> conv1d<T>(const TensorPtr<T>&, const TensorPtr<T>&,  \
                                  const TensorPtr<T>&, Pad, std::int64_t);   \
  template TensorPtr<T> conv1d_transposed<T>(                                \
      const TensorPtr<T>&, const TensorPtr<T>&, const TensorPtr<T>&,         \
      std::int64_t);                                                          \
  template TensorPtr<T> add<T>(const TensorPtr<T>&, const TensorPtr<T>&);    \
  template TensorPtr<T> sub<T>(const TensorPtr<T>&, const TensorPtr<T>&);    \
  template TensorPtr<T> mul<T>(const TensorPtr<T>&, const TensorPtr<T>&);    \
  template TensorPtr<T> scale<T>(const TensorPtr<T>&, T);                    \
  template TensorPtr<T> add_bias_rows<T>(const TensorPtr<T>&,                \
                                         const TensorPtr<T>&);               \
  template TensorPtr<T> silu<T>(const TensorPtr<T>&);                        \
  template TensorPtr<T> sigmoid<T>(const TensorPtr<T>&);                     \
  template TensorPtr<T> softplus<T>(const TensorPtr<T>&);                    \
  template TensorPtr<T> exp<T>(const TensorPtr<T>&);                         \
  template TensorPtr<T> neg<T>(const TensorPtr<T>&);                         \
  template TensorPtr<T> sum<T>(const TensorPtr<T>&);                         \
  template TensorPtr<T> mean<T>(const TensorPtr<T>&);                        \
  template TensorPtr<T> transpose2d<T>(const TensorPtr<T>&);                 \
  template TensorPtr<T> reverse_rows<T>(const TensorPtr<T>&);                \
  template TensorPtr<T> pad_cols<T>(const TensorPtr<T>&, std::int64_t,       \
                                    std::int64_t);                           \
  template TensorPtr<T> li_upsample_cols<T>(const TensorPtr<T>&,             \
                                            std::int64_t);

MSECG_INSTANTIATE_OPS(float)
MSECG_INSTANTIATE_OPS(double)

#undef MSECG_INSTANTIATE_OPS

}  // namespace ops
}  // namespace msecg
