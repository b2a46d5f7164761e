// SPDX-License-Identifier: Apache-2.0
#include <msecg/ssm.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <msecg/ops.hpp>

namespace msecg {
namespace ssm {

namespace {

template <typename T>
void require_shape(const TensorPtr<T>& t, const Shape& want, const char* op,
                   const char* name) {
  if (!t || t->shape != want)
    throw DimensionError(std::string(op) + ": " + name + " must be " +
                         shape_str(want) + ", got " +
                         (t ? shape_str(t->shape) : std::string("null")));
}

template <typename T>
void require_positive(const TensorPtr<T>& delta, const char* op) {
  for (const T v : delta->value)
    if (!(v > T(0)))
      throw ContractError(std::string(op) +
                          ": step sizes must be strictly positive");
}

// (exp(z) - 1) / a with z = d * a, plus its partials, stable as a -> 0.
template <typename T>
struct ZohCoef {
  T coef, d_delta, d_a;
};

template <typename T>
ZohCoef<T> zoh_coef(T d, T a) {
  if (std::abs(a) < T(1e-12)) {
    return {d, T(1), d * d / T(2)};
  }
  const T e = std::exp(d * a);
  return {(e - T(1)) / a, e, (d * a * e - e + T(1)) / (a * a)};
}

}  // namespace

template <typename T>
InputDependent<T> input_dependent_params(const TensorPtr<T>& x,
                                         const SsmParams<T>& p) {
  if (!x || x->shape.size() != 2)
    throw DimensionError("input_dependent_params: x must be [L, E]");
  const std::int64_t e = x->shape[1];
  if (!p.w_b || p.w_b->shape.size() != 2 || p.w_b->shape[0] != e)
    throw DimensionError("input_dependent_params: w_b must be [E, S]");
  const std::int64_t s = p.w_b->shape[1];
  require_shape(p.w_c, {e, s}, "input_dependent_params", "w_c");
  if (!p.w_dt_low || p.w_dt_low->shape.size() != 2 ||
      p.w_dt_low->shape[0] != e)
    throw DimensionError("input_dependent_params: w_dt_low must be [E, R]");
  const std::int64_t r = p.w_dt_low->shape[1];
  if (!p.w_dt_up || p.w_dt_up->shape.size() != 2 || p.w_dt_up->shape[0] != r)
    throw DimensionError("input_dependent_params: w_dt_up must be [R, I]");
  const std::int64_t i = p.w_dt_up->shape[1];
  require_shape(p.dt_bias, {i}, "input_dependent_params", "dt_bias");

  InputDependent<T> out;
  out.delta = ops::softplus(ops::add_bias_rows(
      ops::matmul(ops::matmul(x, p.w_dt_low), p.w_dt_up), p.dt_bias));
  out.b = ops::matmul(x, p.w_b);
  out.c = ops::matmul(x, p.w_c);
  return out;
}

template <typename T>
TensorPtr<T> discretize_a(const TensorPtr<T>& delta, const TensorPtr<T>& a) {
  if (!delta || delta->shape.size() != 2)
    throw DimensionError("discretize_a: delta must be [L, I]");
  const std::int64_t l = delta->shape[0], i = delta->shape[1];
  if (!a || a->shape.size() != 2 || a->shape[0] != i)
    throw DimensionError("discretize_a: a must be [I, S]");
  const std::int64_t s = a->shape[1];
  require_positive(delta, "discretize_a");

  auto out = Tensor<T>::zeros({l, i, s});
  for (std::int64_t li = 0; li < l; ++li)
    for (std::int64_t ii = 0; ii < i; ++ii) {
      const T d = delta->value[li * i + ii];
      for (std::int64_t si = 0; si < s; ++si)
        out->value[(li * i + ii) * s + si] =
            std::exp(d * a->value[ii * s + si]);
    }
  check_finite(*out, "discretize_a");

  Tape<T>* tape = Tape<T>::current();
  if (!tape || !(delta->requires_grad || a->requires_grad)) return out;
  out->requires_grad = true;
  out->ensure_grad();
  if (delta->requires_grad) delta->ensure_grad();
  if (a->requires_grad) a->ensure_grad();
  tape->record([delta, a, out, l, i, s] {
    for (std::int64_t li = 0; li < l; ++li)
      for (std::int64_t ii = 0; ii < i; ++ii)
        for (std::int64_t si = 0; si < s; ++si) {
          const std::int64_t idx = (li * i + ii) * s + si;
          const T g = out->grad[idx] * out->value[idx];
          if (delta->requires_grad)
            delta->grad[li * i + ii] += g * a->value[ii * s + si];
          if (a->requires_grad)
            a->grad[ii * s + si] += g * delta->value[li * i + ii];
        }
  });
  return out;
}

template <typename T>
TensorPtr<T> discretize_b(const TensorPtr<T>& delta, const TensorPtr<T>& b,
                          const TensorPtr<T>& a, DiscretizeMode mode) {
  if (!delta || delta->shape.size() != 2)
    throw DimensionError("discretize_b: delta must be [L, I]");
  const std::int64_t l = delta->shape[0], i = delta->shape[1];
  if (!b || b->shape.size() != 2 || b->shape[0] != l)
    throw DimensionError("discretize_b: b must be [L, S]");
  const std::int64_t s = b->shape[1];
  if (mode == DiscretizeMode::zoh)
    require_shape(a, {i, s}, "discretize_b", "a");
  require_positive(delta, "discretize_b");

  auto out = Tensor<T>::zeros({l, i, s});
  if (mode == DiscretizeMode::euler) {
    for (std::int64_t li = 0; li < l; ++li)
      for (std::int64_t ii = 0; ii < i; ++ii) {
        const T d = delta->value[li * i + ii];
        for (std::int64_t si = 0; si < s; ++si)
          out->value[(li * i + ii) * s + si] = d * b->value[li * s + si];
      }
  } else {
    for (std::int64_t li = 0; li < l; ++li)
      for (std::int64_t ii = 0; ii < i; ++ii) {
        const T d = delta->value[li * i + ii];
        for (std::int64_t si = 0; si < s; ++si) {
          const auto zc = zoh_coef(d, a->value[ii * s + si]);
          out->value[(li * i + ii) * s + si] = zc.coef * b->value[li * s + si];
        }
      }
  }
  check_finite(*out, "discretize_b");

  Tape<T>* tape = Tape<T>::current();
  const bool a_grad =
      mode == DiscretizeMode::zoh && a && a->requires_grad;
  if (!tape || !(delta->requires_grad || b->requires_grad || a_grad))
    return out;
  out->requires_grad = true;
  out->ensure_grad();
  if (delta->requires_grad) delta->ensure_grad();
  if (b->requires_grad) b->ensure_grad();
  if (a_grad) a->ensure_grad();
  tape->record([delta, b, a, out, mode, a_grad, l, i, s] {
    for (std::int64_t li = 0; li < l; ++li)
      for (std::int64_t ii = 0; ii < i; ++ii) {
        const T d = delta->value[li * i + ii];
        for (std::int64_t si = 0; si < s; ++si) {
          const std::int64_t idx = (li * i + ii) * s + si;
          const T g = out->grad[idx];
          const T bv = b->value[li * s + si];
          if (mode == DiscretizeMode::euler) {
            if (delta->requires_grad) delta->grad[li * i + ii] += g * bv;
            if (b->requires_grad) b->grad[li * s + si] += g * d;
          } else {
            const auto zc = zoh_coef(d, a->value[ii * s + si]);
            if (delta->requires_grad)
              delta->grad[li * i + ii] += g * zc.d_delta * bv;
            if (b->requires_grad) b->grad[li * s + si] += g * zc.coef;
            if (a_grad) a->grad[ii * s + si] += g * zc.d_a * bv;
          }
        }
      }
  });
  return out;
}

template <typename T>
void scan_sequential_kernel(const T* abar, const T* bbar, const T* x,
                            std::int64_t l, std::int64_t i, std::int64_t s,
                            T* h) {
  const std::int64_t is = i * s;
  for (std::int64_t li = 0; li < l; ++li)
    for (std::int64_t ii = 0; ii < i; ++ii) {
      const T xv = x[li * i + ii];
      const std::int64_t row = li * is + ii * s;
      for (std::int64_t si = 0; si < s; ++si) {
        const T prev = li > 0 ? h[row - is + si] : T(0);
        h[row + si] = abar[row + si] * prev + bbar[row + si] * xv;
      }
    }
}

namespace {

// Blelloch two-sweep scan of one (i, s) lane. Elements are affine maps
// h -> a*h + b composed left to right; identity is (1, 0).
template <typename T>
void scan_parallel_lane(const T* abar, const T* bbar, const T* x,
                        std::int64_t l, std::int64_t i, std::int64_t s,
                        std::int64_t lane, std::vector<std::pair<T, T>>& buf,
                        T* h) {
  const std::int64_t is = i * s;
  const std::int64_t ii = lane / s;
  const std::int64_t off = lane;
  std::int64_t n = 1;
  while (n < l) n <<= 1;
  buf.assign(static_cast<std::size_t>(n), {T(1), T(0)});
  for (std::int64_t li = 0; li < l; ++li)
    buf[li] = {abar[li * is + off], bbar[li * is + off] * x[li * i + ii]};

  // combine(first, second) applies first, then second.
  const auto combine = [](const std::pair<T, T>& p, const std::pair<T, T>& q) {
    return std::pair<T, T>{q.first * p.first, q.first * p.second + q.second};
  };

  for (std::int64_t d = 1; d < n; d <<= 1)
    for (std::int64_t k = 0; k + 2 * d <= n; k += 2 * d)
      buf[k + 2 * d - 1] = combine(buf[k + d - 1], buf[k + 2 * d - 1]);

  buf[n - 1] = {T(1), T(0)};
  for (std::int64_t d = n >> 1; d >= 1; d >>= 1)
    for (std::int64_t k = 0; k + 2 * d <= n; k += 2 * d) {
      const std::pair<T, T> left = buf[k + d - 1];
      buf[k + d - 1] = buf[k + 2 * d - 1];
      buf[k + 2 * d - 1] = combine(buf[k + 2 * d - 1], left);
    }

  // buf[li] is now the exclusive composition; h[-1] = 0 makes its value
  // simply the offset term, and one more local step lands on h[li].
  for (std::int64_t li = 0; li < l; ++li)
    h[li * is + off] = abar[li * is + off] * buf[li].second +
                       bbar[li * is + off] * x[li * i + ii];
}

}  // namespace

template <typename T>
void scan_parallel_kernel(const T* abar, const T* bbar, const T* x,
                          std::int64_t l, std::int64_t i, std::int64_t s,
                          int threads, T* h) {
  if (threads < 1)
    throw ParameterError("scan_parallel_kernel: threads must be >= 1");
  const std::int64_t lanes = i * s;
  const std::int64_t nthreads =
      std::min<std::int64_t>(threads, std::max<std::int64_t>(lanes, 1));
  const std::int64_t per = (lanes + nthreads - 1) / nthreads;
  auto work = [&](std::int64_t lo, std::int64_t hi) {
    std::vector<std::pair<T, T>> buf;
    for (std::int64_t lane = lo; lane < hi; ++lane)
      scan_parallel_lane(abar, bbar, x, l, i, s, lane, buf, h);
  };
  if (nthreads == 1) {
    work(0, lanes);
    return;
  }
  std::vector<std::thread> pool;
  for (std::int64_t t = 0; t < nthreads; ++t) {
    const std::int64_t lo = t * per;
    const std::int64_t hi = std::min(lanes, lo + per);
    if (lo >= hi) break;
    pool.emplace_back(work, lo, hi);
  }
  for (auto& th : pool) th.join();
}

template <typename T>
void scan_backward_kernel(const T* abar, const T* bbar, const T* c,
                          const T* x, const T* d_skip, const T* h,
                          const T* dy, std::int64_t l, std::int64_t i,
                          std::int64_t s, T* d_abar, T* d_bbar, T* d_c,
                          T* d_x, T* d_dskip) {
  const std::int64_t is = i * s;
  std::vector<T> g(static_cast<std::size_t>(is), T(0));
  for (std::int64_t li = l - 1; li >= 0; --li) {
    for (std::int64_t ii = 0; ii < i; ++ii) {
      const T dyv = dy[li * i + ii];
      const T xv = x[li * i + ii];
      T dx_acc = T(0);
      for (std::int64_t si = 0; si < s; ++si) {
        const std::int64_t idx = li * is + ii * s + si;
        const std::int64_t lane = ii * s + si;
        T gv = dyv * c[li * s + si];
        if (li + 1 < l) gv += abar[idx + is] * g[lane];
        g[lane] = gv;
        if (d_abar) d_abar[idx] += gv * (li > 0 ? h[idx - is] : T(0));
        if (d_bbar) d_bbar[idx] += gv * xv;
        dx_acc += gv * bbar[idx];
        if (d_c) d_c[li * s + si] += dyv * h[idx];
      }
      if (d_x) d_x[li * i + ii] += dx_acc + (d_skip ? d_skip[ii] * dyv : T(0));
      if (d_dskip) d_dskip[ii] += dyv * xv;
    }
  }
}

template <typename T>
TensorPtr<T> ssm_scan(const TensorPtr<T>& abar, const TensorPtr<T>& bbar,
                      const TensorPtr<T>& c, const TensorPtr<T>& x,
                      const TensorPtr<T>& d_skip, ScanMode mode,
                      int threads) {
  if (!abar || abar->shape.size() != 3)
    throw DimensionError("ssm_scan: abar must be [L, I, S]");
  const std::int64_t l = abar->shape[0], i = abar->shape[1],
                     s = abar->shape[2];
  require_shape(bbar, {l, i, s}, "ssm_scan", "bbar");
  require_shape(c, {l, s}, "ssm_scan", "c");
  require_shape(x, {l, i}, "ssm_scan", "x");
  require_shape(d_skip, {i}, "ssm_scan", "d_skip");

  auto h = std::make_shared<std::vector<T>>(
      static_cast<std::size_t>(l * i * s), T(0));
  if (mode == ScanMode::sequential)
    scan_sequential_kernel(abar->value.data(), bbar->value.data(),
                           x->value.data(), l, i, s, h->data());
  else
    scan_parallel_kernel(abar->value.data(), bbar->value.data(),
                         x->value.data(), l, i, s, threads, h->data());

  auto out = Tensor<T>::zeros({l, i});
  const std::int64_t is = i * s;
  for (std::int64_t li = 0; li < l; ++li)
    for (std::int64_t ii = 0; ii < i; ++ii) {
      T acc = d_skip->value[ii] * x->value[li * i + ii];
      const T* hrow = h->data() + li * is + ii * s;
      const T* crow = c->value.data() + li * s;
      for (std::int64_t si = 0; si < s; ++si) acc += crow[si] * hrow[si];
      out->value[li * i + ii] = acc;
    }
  check_finite(*out, "ssm_scan");

  Tape<T>* tape = Tape<T>::current();
  const bool any = abar->requires_grad || bbar->requires_grad ||
                   c->requires_grad || x->requires_grad ||
                   d_skip->requires_grad;
  if (!tape || !any) return out;
  out->requires_grad = true;
  out->ensure_grad();
  for (const auto& t : {abar, bbar, c, x, d_skip})
    if (t->requires_grad) t->ensure_grad();
  tape->record([abar, bbar, c, x, d_skip, out, h, l, i, s] {
    scan_backward_kernel(
        abar->value.data(), bbar->value.data(), c->value.data(),
        x->value.data(), d_skip->value.data(), h->data(), out->grad.data(),
        l, i, s, abar->requires_grad ? abar->grad.data() : nullptr,
        bbar->requires_grad ? bbar->grad.data() : nullptr,
        c->requires_grad ? c->grad.data() : nullptr,
        x->requires_grad ? x->grad.data() : nullptr,
        d_skip->requires_grad ? d_skip->grad.data() : nullptr);
  });
  return out;
}

#define MSECG_INSTANTIATE_SSM(T)                                              \
  template struct SsmParams<T>;                                               \
  template struct InputDependent<T>;                                          \
  template InputDependent<T> input_dependent_params<T>(const TensorPtr<T>&,   \
                                                       const SsmParams<T>&);  \
  template TensorPtr<T> discretize_a<T>(const TensorPtr<T>&,                  \
                                        const TensorPtr<T>&);                 \
  template TensorPtr<T> discretize_b<T>(const TensorPtr<T>&,                  \
                                        const TensorPtr<T>&,                  \
                                        const TensorPtr<T>&, DiscretizeMode); \
  template void scan_sequential_kernel<T>(const T*, const T*, const T*,       \
                                          std::int64_t, std::int64_t,         \
                                          std::int64_t, T*);                  \
  template void scan_parallel_kernel<T>(const T*, const T*, const T*,         \
                                        std::int64_t, std::int64_t,           \
                                        std::int64_t, int, T*);               \
  template void scan_backward_kernel<T>(                                      \
      const T*, const T*, const T*, const T*, const T*, const T*, const T*,   \
      std::int64_t, std::int64_t, std::int64_t, T*, T*, T*, T*, T*);          \
  template TensorPtr<T> ssm_scan<T>(const TensorPtr<T>&, const TensorPtr<T>&, \
                                    const TensorPtr<T>&, const TensorPtr<T>&, \
                                    const TensorPtr<T>&, ScanMode, int);

MSECG_INSTANTIATE_SSM(float)
MSECG_INSTANTIATE_SSM(double)

#undef MSECG_INSTANTIATE_SSM

}  // namespace ssm
}  // namespace msecg
