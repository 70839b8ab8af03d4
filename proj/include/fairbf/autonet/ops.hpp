#pragma once

// Differentiable ops. Each op computes its forward value eagerly and, when
// any input requires a gradient, records a closure that accumulates into
// the inputs' gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include "fairbf/autonet/tensor.hpp"
#include "fairbf/error.hpp"

namespace fairbf::autonet {

namespace detail_ops {

template <typename T>
void require_same_numel(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.numel() != b.numel())
    throw DimensionError(fairbf::detail::concat(op, ": operand sizes differ (", a.numel(),
                                                " vs ", b.numel(), ")"));
}

template <typename T>
std::size_t last_dim(const Tensor<T>& x, const char* op) {
  if (x.rank() == 0) throw DimensionError(fairbf::detail::concat(op, ": scalar input"));
  return x.shape().back();
}

// Accumulate into a parent gradient if it wants one.
template <typename T>
T* grad_of(Node<T>* n) {
  return n->requires_grad ? n->ensure_grad().data() : nullptr;
}

}  // namespace detail_ops

// y = x W + b over the last axis. x [..., in], W [in, out], b [out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const std::size_t in = detail_ops::last_dim(x, "linear");
  if (w.rank() != 2 || w.dim(0) != in)
    throw DimensionError(fairbf::detail::concat("linear: input width ", in,
                                                " does not match weight rows"));
  const std::size_t out_w = w.dim(1);
  if (b.numel() != out_w) throw DimensionError("linear: bias length mismatch");
  const std::size_t rows = x.numel() / in;
  Shape shape = x.shape();
  shape.back() = out_w;
  auto out = Tensor<T>::make_result(shape, {x, w, b});

  const T* X = x.data().data();
  const T* W = w.data().data();
  const T* B = b.data().data();
  T* Y = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T* y = Y + r * out_w;
    std::copy(B, B + out_w, y);
    const T* xr = X + r * in;
    for (std::size_t k = 0; k < in; ++k) {
      const T xv = xr[k];
      const T* wk = W + k * out_w;
      for (std::size_t j = 0; j < out_w; ++j) y[j] += xv * wk[j];
    }
  }

  Node<T>* xn = x.node();
  Node<T>* wn = w.node();
  Node<T>* bn = b.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    const T* dY = on->grad.data();
    const T* X = xn->data.data();
    const T* W = wn->data.data();
    if (T* dX = detail_ops::grad_of(xn)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* dy = dY + r * out_w;
        T* dx = dX + r * in;
        for (std::size_t k = 0; k < in; ++k) {
          const T* wk = W + k * out_w;
          T acc = 0;
          for (std::size_t j = 0; j < out_w; ++j) acc += dy[j] * wk[j];
          dx[k] += acc;
        }
      }
    }
    if (T* dW = detail_ops::grad_of(wn)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* dy = dY + r * out_w;
        const T* xr = X + r * in;
        for (std::size_t k = 0; k < in; ++k) {
          const T xv = xr[k];
          T* dw = dW + k * out_w;
          for (std::size_t j = 0; j < out_w; ++j) dw[j] += xv * dy[j];
        }
      }
    }
    if (T* dB = detail_ops::grad_of(bn)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* dy = dY + r * out_w;
        for (std::size_t j = 0; j < out_w; ++j) dB[j] += dy[j];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail_ops::require_same_numel(a, b, "add");
  auto out = Tensor<T>::make_result(a.shape(), {a, b});
  for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  Node<T>* an = a.node();
  Node<T>* bn = b.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    const std::size_t n = on->data.size();
    if (T* da = detail_ops::grad_of(an))
      for (std::size_t i = 0; i < n; ++i) da[i] += on->grad[i];
    if (T* db = detail_ops::grad_of(bn))
      for (std::size_t i = 0; i < n; ++i) db[i] += on->grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail_ops::require_same_numel(a, b, "sub");
  auto out = Tensor<T>::make_result(a.shape(), {a, b});
  for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  Node<T>* an = a.node();
  Node<T>* bn = b.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    const std::size_t n = on->data.size();
    if (T* da = detail_ops::grad_of(an))
      for (std::size_t i = 0; i < n; ++i) da[i] += on->grad[i];
    if (T* db = detail_ops::grad_of(bn))
      for (std::size_t i = 0; i < n; ++i) db[i] -= on->grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail_ops::require_same_numel(a, b, "mul");
  auto out = Tensor<T>::make_result(a.shape(), {a, b});
  for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  Node<T>* an = a.node();
  Node<T>* bn = b.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    const std::size_t n = on->data.size();
    if (T* da = detail_ops::grad_of(an))
      for (std::size_t i = 0; i < n; ++i) da[i] += on->grad[i] * bn->data[i];
    if (T* db = detail_ops::grad_of(bn))
      for (std::size_t i = 0; i < n; ++i) db[i] += on->grad[i] * an->data[i];
  });
  return out;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail_ops::require_same_numel(a, b, "div");
  auto out = Tensor<T>::make_result(a.shape(), {a, b});
  for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] / b.data()[i];
  Node<T>* an = a.node();
  Node<T>* bn = b.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    const std::size_t n = on->data.size();
    if (T* da = detail_ops::grad_of(an))
      for (std::size_t i = 0; i < n; ++i) da[i] += on->grad[i] / bn->data[i];
    if (T* db = detail_ops::grad_of(bn))
      for (std::size_t i = 0; i < n; ++i)
        db[i] -= on->grad[i] * on->data[i] / bn->data[i];
  });
  return out;
}

// y = scale * x + shift, with constant scale and shift.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift) {
  auto out = Tensor<T>::make_result(x.shape(), {x});
  for (std::size_t i = 0; i < x.numel(); ++i) out.data()[i] = scale * x.data()[i] + shift;
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    if (T* dx = detail_ops::grad_of(xn))
      for (std::size_t i = 0; i < on->data.size(); ++i) dx[i] += scale * on->grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return affine(x, s, T(0));
}

// y[..., j] = (x[..., j] - shift[j]) * gain[j] with constant per-column
// shift and gain.
template <typename T>
Tensor<T> standardize_columns(const Tensor<T>& x, std::span<const T> shift,
                              std::span<const T> gain) {
  const std::size_t d = detail_ops::last_dim(x, "standardize_columns");
  if (shift.size() != d || gain.size() != d)
    throw DimensionError("standardize_columns: statistics length mismatch");
  auto out = Tensor<T>::make_result(x.shape(), {x});
  const std::size_t rows = x.numel() / d;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j)
      out.data()[r * d + j] = (x.data()[r * d + j] - shift[j]) * gain[j];
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  std::vector<T> g(gain.begin(), gain.end());
  out.set_backward([=] {
    if (T* dx = detail_ops::grad_of(xn))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) dx[r * d + j] += g[j] * on->grad[r * d + j];
  });
  return out;
}

// y = x + c elementwise with a constant vector c.
template <typename T>
Tensor<T> add_constant(const Tensor<T>& x, std::span<const T> c) {
  if (c.size() != x.numel()) throw DimensionError("add_constant: size mismatch");
  auto out = Tensor<T>::make_result(x.shape(), {x});
  for (std::size_t i = 0; i < x.numel(); ++i) out.data()[i] = x.data()[i] + c[i];
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    if (T* dx = detail_ops::grad_of(xn))
      for (std::size_t i = 0; i < on->data.size(); ++i) dx[i] += on->grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  auto out = Tensor<T>::make_result(x.shape(), {x});
  for (std::size_t i = 0; i < x.numel(); ++i) out.data()[i] = x.data()[i] * x.data()[i];
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    if (T* dx = detail_ops::grad_of(xn))
      for (std::size_t i = 0; i < on->data.size(); ++i)
        dx[i] += T(2) * xn->data[i] * on->grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto out = Tensor<T>::make_result(x.shape(), {x});
  for (std::size_t i = 0; i < x.numel(); ++i) out.data()[i] = std::max(x.data()[i], T(0));
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    if (T* dx = detail_ops::grad_of(xn))
      for (std::size_t i = 0; i < on->data.size(); ++i)
        if (xn->data[i] > T(0)) dx[i] += on->grad[i];
  });
  return out;
}

// log2(1 + x)
template <typename T>
Tensor<T> log2_1p(const Tensor<T>& x) {
  auto out = Tensor<T>::make_result(x.shape(), {x});
  for (std::size_t i = 0; i < x.numel(); ++i)
    out.data()[i] = std::log1p(x.data()[i]) / std::numbers::ln2_v<T>;
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    if (T* dx = detail_ops::grad_of(xn))
      for (std::size_t i = 0; i < on->data.size(); ++i)
        dx[i] += on->grad[i] / ((T(1) + xn->data[i]) * std::numbers::ln2_v<T>);
  });
  return out;
}

// Sum over the last axis: [..., n] -> [...].
template <typename T>
Tensor<T> sum_last(const Tensor<T>& x) {
  const std::size_t n = detail_ops::last_dim(x, "sum_last");
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  auto out = Tensor<T>::make_result(shape, {x});
  const std::size_t rows = out.numel();
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += x.data()[r * n + j];
    out.data()[r] = acc;
  }
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    if (T* dx = detail_ops::grad_of(xn))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) dx[r * n + j] += on->grad[r];
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  auto out = Tensor<T>::make_result(Shape{}, {x});
  T acc = 0;
  for (T v : x.data()) acc += v;
  out.data()[0] = acc;
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    if (T* dx = detail_ops::grad_of(xn))
      for (std::size_t i = 0; i < xn->data.size(); ++i) dx[i] += on->grad[0];
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// Diagonal of the trailing square block: [..., n, n] -> [..., n].
template <typename T>
Tensor<T> diagonal(const Tensor<T>& x) {
  if (x.rank() < 2 || x.shape()[x.rank() - 1] != x.shape()[x.rank() - 2])
    throw DimensionError("diagonal: trailing dims must be square");
  const std::size_t n = x.shape().back();
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  auto out = Tensor<T>::make_result(shape, {x});
  const std::size_t blocks = out.numel() / n;
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < n; ++i) out.data()[b * n + i] = x.data()[(b * n + i) * n + i];
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    if (T* dx = detail_ops::grad_of(xn))
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = 0; i < n; ++i) dx[(b * n + i) * n + i] += on->grad[b * n + i];
  });
  return out;
}

// Row sums excluding the diagonal: [..., n, n] -> [..., n].
template <typename T>
Tensor<T> offdiag_row_sum(const Tensor<T>& x) {
  if (x.rank() < 2 || x.shape()[x.rank() - 1] != x.shape()[x.rank() - 2])
    throw DimensionError("offdiag_row_sum: trailing dims must be square");
  const std::size_t n = x.shape().back();
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  auto out = Tensor<T>::make_result(shape, {x});
  const std::size_t blocks = out.numel() / n;
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      T acc = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) acc += x.data()[(b * n + i) * n + j];
      out.data()[b * n + i] = acc;
    }
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    if (T* dx = detail_ops::grad_of(xn))
      for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            if (j != i) dx[(b * n + i) * n + j] += on->grad[b * n + i];
  });
  return out;
}

// min(x - target, 0) on a scalar. At x == target the subgradient is 0.
template <typename T>
Tensor<T> hinge_below(const Tensor<T>& x, T target) {
  if (x.numel() != 1) throw DimensionError("hinge_below: scalar input expected");
  auto out = Tensor<T>::make_result(Shape{}, {x});
  const T v = x.data()[0] - target;
  const bool active = v < T(0);
  out.data()[0] = active ? v : T(0);
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    if (T* dx = detail_ops::grad_of(xn))
      if (active) dx[0] += on->grad[0];
  });
  return out;
}

// Layer normalization over the last axis with learned gain and bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  const std::size_t d = detail_ops::last_dim(x, "layer_norm");
  if (gamma.numel() != d || beta.numel() != d)
    throw DimensionError("layer_norm: gain/bias length mismatch");
  const std::size_t rows = x.numel() / d;
  auto out = Tensor<T>::make_result(x.shape(), {x, gamma, beta});
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    T* xh = xhat->data() + r * d;
    T* y = out.data().data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (xr[j] - mu) * is;
      y[j] = gamma.data()[j] * xh[j] + beta.data()[j];
    }
  }
  Node<T>* xn = x.node();
  Node<T>* gn = gamma.node();
  Node<T>* bn = beta.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    T* dg = detail_ops::grad_of(gn);
    T* db = detail_ops::grad_of(bn);
    T* dx = detail_ops::grad_of(xn);
    std::vector<T> dxh(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* dy = on->grad.data() + r * d;
      const T* xh = xhat->data() + r * d;
      if (dg)
        for (std::size_t j = 0; j < d; ++j) dg[j] += dy[j] * xh[j];
      if (db)
        for (std::size_t j = 0; j < d; ++j) db[j] += dy[j];
      if (dx) {
        T m1 = 0, m2 = 0;
        for (std::size_t j = 0; j < d; ++j) {
          dxh[j] = dy[j] * gn->data[j];
          m1 += dxh[j];
          m2 += dxh[j] * xh[j];
        }
        m1 /= static_cast<T>(d);
        m2 /= static_cast<T>(d);
        const T is = (*inv_std)[r];
        T* dxr = dx + r * d;
        for (std::size_t j = 0; j < d; ++j) dxr[j] += is * (dxh[j] - m1 - xh[j] * m2);
      }
    }
  });
  return out;
}

// Scaled dot-product attention within groups of `tokens` consecutive rows.
// q, k, v: [groups * tokens, d] (any leading shape), heads split the
// feature axis into equal slices. Output has the shape of q.
template <typename T>
Tensor<T> grouped_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            std::size_t tokens, std::size_t heads) {
  const std::size_t d = detail_ops::last_dim(q, "attention");
  detail_ops::require_same_numel(q, k, "attention");
  detail_ops::require_same_numel(q, v, "attention");
  if (heads == 0 || d % heads != 0)
    throw DimensionError(fairbf::detail::concat("attention: width ", d,
                                                " not divisible by ", heads, " heads"));
  const std::size_t rows = q.numel() / d;
  if (tokens == 0 || rows % tokens != 0)
    throw DimensionError("attention: rows not divisible by token count");
  const std::size_t groups = rows / tokens;
  const std::size_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));

  auto out = Tensor<T>::make_result(q.shape(), {q, k, v});
  // probs[g][h][i][j]
  auto probs = std::make_shared<std::vector<T>>(groups * heads * tokens * tokens);
  const T* Q = q.data().data();
  const T* K = k.data().data();
  const T* V = v.data().data();
  T* O = out.data().data();
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t h = 0; h < heads; ++h) {
      T* P = probs->data() + (g * heads + h) * tokens * tokens;
      for (std::size_t i = 0; i < tokens; ++i) {
        const T* qi = Q + (g * tokens + i) * d + h * dh;
        T* pi = P + i * tokens;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < tokens; ++j) {
          const T* kj = K + (g * tokens + j) * d + h * dh;
          T s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          pi[j] = s * inv_sqrt;
          mx = std::max(mx, pi[j]);
        }
        T z = 0;
        for (std::size_t j = 0; j < tokens; ++j) {
          pi[j] = std::exp(pi[j] - mx);
          z += pi[j];
        }
        for (std::size_t j = 0; j < tokens; ++j) pi[j] /= z;
        T* oi = O + (g * tokens + i) * d + h * dh;
        for (std::size_t j = 0; j < tokens; ++j) {
          const T* vj = V + (g * tokens + j) * d + h * dh;
          const T p = pi[j];
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p * vj[c];
        }
      }
    }
  }

  Node<T>* qn = q.node();
  Node<T>* kn = k.node();
  Node<T>* vn = v.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    T* dQ = detail_ops::grad_of(qn);
    T* dK = detail_ops::grad_of(kn);
    T* dV = detail_ops::grad_of(vn);
    const T* Q = qn->data.data();
    const T* K = kn->data.data();
    const T* V = vn->data.data();
    const T* dO = on->grad.data();
    std::vector<T> dp(tokens);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t h = 0; h < heads; ++h) {
        const T* P = probs->data() + (g * heads + h) * tokens * tokens;
        for (std::size_t i = 0; i < tokens; ++i) {
          const T* doi = dO + (g * tokens + i) * d + h * dh;
          const T* pi = P + i * tokens;
          // dV_j += p_ij dO_i ; dp_ij = dO_i . V_j
          T dot = 0;
          for (std::size_t j = 0; j < tokens; ++j) {
            const T* vj = V + (g * tokens + j) * d + h * dh;
            T s = 0;
            for (std::size_t c = 0; c < dh; ++c) s += doi[c] * vj[c];
            dp[j] = s;
            dot += s * pi[j];
            if (dV) {
              T* dvj = dV + (g * tokens + j) * d + h * dh;
              for (std::size_t c = 0; c < dh; ++c) dvj[c] += pi[j] * doi[c];
            }
          }
          // softmax backward, then through the scaled scores
          const T* qi = Q + (g * tokens + i) * d + h * dh;
          T* dqi = dQ ? dQ + (g * tokens + i) * d + h * dh : nullptr;
          for (std::size_t j = 0; j < tokens; ++j) {
            const T ds = pi[j] * (dp[j] - dot) * inv_sqrt;
            const T* kj = K + (g * tokens + j) * d + h * dh;
            if (dqi)
              for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
            if (dK) {
              T* dkj = dK + (g * tokens + j) * d + h * dh;
              for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
            }
          }
        }
      }
    }
  });
  return out;
}

// Normalizes every row of the last axis to unit Euclidean norm. Rows with
// norm below `dead_threshold` become e_1 with zero gradient; the number of
// such rows is added to *dead_rows when given.
template <typename T>
Tensor<T> row_normalize(const Tensor<T>& x, std::size_t* dead_rows = nullptr,
                        T dead_threshold = T(1e-12)) {
  const std::size_t n = detail_ops::last_dim(x, "row_normalize");
  const std::size_t rows = x.numel() / n;
  auto out = Tensor<T>::make_result(x.shape(), {x});
  auto inv_norm = std::make_shared<std::vector<T>>(rows, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * n;
    T* y = out.data().data() + r * n;
    T s = 0;
    for (std::size_t j = 0; j < n; ++j) s += xr[j] * xr[j];
    const T nrm = std::sqrt(s);
    if (!(nrm >= dead_threshold)) {
      std::fill(y, y + n, T(0));
      y[0] = T(1);
      if (dead_rows) ++*dead_rows;
      continue;
    }
    const T inv = T(1) / nrm;
    (*inv_norm)[r] = inv;
    for (std::size_t j = 0; j < n; ++j) y[j] = xr[j] * inv;
  }
  Node<T>* xn = x.node();
  Node<T>* on = out.node();
  out.set_backward([=] {
    T* dx = detail_ops::grad_of(xn);
    if (!dx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const T inv = (*inv_norm)[r];
      if (inv == T(0)) continue;
      const T* y = on->data.data() + r * n;
      const T* dy = on->grad.data() + r * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
      T* dxr = dx + r * n;
      for (std::size_t j = 0; j < n; ++j) dxr[j] += inv * (dy[j] - y[j] * dot);
    }
  });
  return out;
}

}  // namespace fairbf::autonet
