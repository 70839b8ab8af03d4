#pragma once

// In-graph rates, Jain's index, per-batch max-min sum-rate scaling, the
// hinge-Lagrangian loss and the projected dual update.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"

#include "fairbf/autonet/ops.hpp"
#include "fairbf/autonet/tensor.hpp"
#include "fairbf/channel.hpp"
#include "fairbf/error.hpp"

namespace fairbf {

struct DualState {
  double lambda = 1.0;
  double j_lb = 0.8;
  double eps = 0.003;
  double eta = 0.01;
};

inline void to_json(nlohmann::json& j, const DualState& d) {
  j = nlohmann::json{{"lambda", d.lambda}, {"j_lb", d.j_lb}, {"eps", d.eps}, {"eta", d.eta}};
}

inline void from_json(const nlohmann::json& j, DualState& d) {
  j.at("lambda").get_to(d.lambda);
  j.at("j_lb").get_to(d.j_lb);
  j.at("eps").get_to(d.eps);
  j.at("eta").get_to(d.eta);
}

// Counters for the two degenerate cases the loss handles without failing.
struct LossDiagnostics {
  std::size_t dead_rows = 0;
  std::size_t degenerate_batches = 0;
};

// Channels of one batch as real arrays, constant w.r.t. the graph.
template <typename T>
struct ChannelBatch {
  std::size_t batch = 0;
  std::size_t n_u = 0;
  std::size_t n_t = 0;
  T power_per_user = T(1);
  std::vector<T> re;     // [batch, n_u, n_t]
  std::vector<T> im;     // [batch, n_u, n_t]
  std::vector<T> noise;  // [batch, n_u]

  static ChannelBatch from_samples(std::span<const ChannelSample* const> samples,
                                   double power_per_user) {
    if (samples.empty()) throw DimensionError("channel batch: no samples");
    ChannelBatch cb;
    cb.batch = samples.size();
    cb.n_u = samples.front()->n_u();
    cb.n_t = samples.front()->n_t();
    cb.power_per_user = static_cast<T>(power_per_user);
    cb.re.resize(cb.batch * cb.n_u * cb.n_t);
    cb.im.resize(cb.re.size());
    cb.noise.resize(cb.batch * cb.n_u);
    for (std::size_t k = 0; k < cb.batch; ++k) {
      const ChannelSample& s = *samples[k];
      if (s.n_u() != cb.n_u || s.n_t() != cb.n_t)
        throw DimensionError("channel batch: samples of differing dimensions");
      for (std::size_t u = 0; u < cb.n_u; ++u) {
        cb.noise[k * cb.n_u + u] = static_cast<T>(s.sigma2[u]);
        for (std::size_t n = 0; n < cb.n_t; ++n) {
          const std::size_t i = (k * cb.n_u + u) * cb.n_t + n;
          cb.re[i] = static_cast<T>(s.h[u][n].real());
          cb.im[i] = static_cast<T>(s.h[u][n].imag());
        }
      }
    }
    return cb;
  }

  static ChannelBatch from_samples(const std::vector<ChannelSample>& samples,
                                   double power_per_user) {
    std::vector<const ChannelSample*> ptrs;
    for (const auto& s : samples) ptrs.push_back(&s);
    return from_samples(ptrs, power_per_user);
  }
};

namespace autonet {

// gains[k, u, l] = P |h_{k,u}^H f_{k,l}|^2 for unit directions
// f [batch, n_u, 2 n_t] (real parts, then imaginary parts).
template <typename T>
Tensor<T> beam_gains(const Tensor<T>& f, const ChannelBatch<T>& ch) {
  const std::size_t B = ch.batch, U = ch.n_u, N = ch.n_t;
  if (f.numel() != B * U * 2 * N)
    throw DimensionError(fairbf::detail::concat("beam_gains: beamformer tensor has ",
                                                f.numel(), " entries, expected ",
                                                B * U * 2 * N));
  auto out = Tensor<T>::make_result({B, U, U}, {f});
  // Keep the complex products for backward.
  auto prod_re = std::make_shared<std::vector<T>>(B * U * U);
  auto prod_im = std::make_shared<std::vector<T>>(B * U * U);
  const T* F = f.data().data();
  for (std::size_t k = 0; k < B; ++k)
    for (std::size_t u = 0; u < U; ++u) {
      const T* x = ch.re.data() + (k * U + u) * N;
      const T* y = ch.im.data() + (k * U + u) * N;
      for (std::size_t l = 0; l < U; ++l) {
        const T* a = F + (k * U + l) * 2 * N;
        const T* b = a + N;
        // conj(h) f = (x - iy)(a + ib)
        T re = 0, im = 0;
        for (std::size_t n = 0; n < N; ++n) {
          re += x[n] * a[n] + y[n] * b[n];
          im += x[n] * b[n] - y[n] * a[n];
        }
        const std::size_t idx = (k * U + u) * U + l;
        (*prod_re)[idx] = re;
        (*prod_im)[idx] = im;
        out.data()[idx] = ch.power_per_user * (re * re + im * im);
      }
    }
  Node<T>* fn = f.node();
  Node<T>* on = out.node();
  const ChannelBatch<T>* chp = &ch;
  out.set_backward([=] {
    T* dF = detail_ops::grad_of(fn);
    if (!dF) return;
    const ChannelBatch<T>& c = *chp;
    for (std::size_t k = 0; k < B; ++k)
      for (std::size_t u = 0; u < U; ++u) {
        const T* x = c.re.data() + (k * U + u) * N;
        const T* y = c.im.data() + (k * U + u) * N;
        for (std::size_t l = 0; l < U; ++l) {
          const std::size_t idx = (k * U + u) * U + l;
          const T g = on->grad[idx] * T(2) * c.power_per_user;
          const T re = (*prod_re)[idx];
          const T im = (*prod_im)[idx];
          T* da = dF + (k * U + l) * 2 * N;
          T* db = da + N;
          for (std::size_t n = 0; n < N; ++n) {
            da[n] += g * (re * x[n] - im * y[n]);
            db[n] += g * (re * y[n] + im * x[n]);
          }
        }
      }
  });
  return out;
}

}  // namespace autonet

template <typename T>
struct StreamRates {
  autonet::Tensor<T> directions;  // [B, U, 2 N_t], unit rows
  autonet::Tensor<T> rates;       // [B, U]
  autonet::Tensor<T> sum_rate;    // [B]   S_k
  autonet::Tensor<T> jain;        // [B]   J_k
};

// Rates, sum rates and Jain's index for every stream, differentiable in
// raw_bf. The channel batch must outlive the backward pass.
template <typename T>
StreamRates<T> graph_rates(const ChannelBatch<T>& channels, const autonet::Tensor<T>& raw_bf,
                           LossDiagnostics* diag = nullptr) {
  using namespace autonet;
  if (raw_bf.rank() != 3 || raw_bf.dim(0) != channels.batch || raw_bf.dim(1) != channels.n_u ||
      raw_bf.dim(2) != 2 * channels.n_t)
    throw DimensionError(fairbf::detail::concat("graph_rates: raw beamformers must be [",
                                                channels.batch, ", ", channels.n_u, ", ",
                                                2 * channels.n_t, "]"));
  StreamRates<T> r;
  r.directions = row_normalize(raw_bf, diag ? &diag->dead_rows : nullptr);
  const auto gains = beam_gains(r.directions, channels);
  const auto signal = diagonal(gains);
  const auto interference = offdiag_row_sum(gains);
  const auto sinr = div(signal, add_constant(interference, std::span<const T>(channels.noise)));
  r.rates = log2_1p(sinr);
  r.sum_rate = sum_last(r.rates);
  const auto energy = sum_last(square(r.rates));
  r.jain = div(square(r.sum_rate), scale(energy, static_cast<T>(channels.n_u)));
  return r;
}

inline constexpr double kMinMaxSpread = 1e-9;

// (S_k - S_min) / (S_max - S_min) with the batch extremes held constant.
// A batch of one or with spread < 1e-9 maps to 0.5 everywhere.
template <typename T>
autonet::Tensor<T> maxmin_normalize(const autonet::Tensor<T>& sums,
                                    LossDiagnostics* diag = nullptr) {
  const auto v = sums.data();
  if (v.empty()) throw DimensionError("maxmin_normalize: empty batch");
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double spread = static_cast<double>(*hi) - static_cast<double>(*lo);
  if (v.size() < 2 || !(spread >= kMinMaxSpread)) {
    if (diag) ++diag->degenerate_batches;
    return autonet::affine(sums, T(0), T(0.5));
  }
  const T inv = static_cast<T>(1.0 / spread);
  return autonet::affine(sums, inv, -*lo * inv);
}

// -(s_bar + lambda * min(j_bar - j_lb, 0)); lambda is a constant.
template <typename T>
autonet::Tensor<T> hinge_loss(const autonet::Tensor<T>& s_bar, const autonet::Tensor<T>& j_bar,
                              const DualState& dual) {
  using namespace autonet;
  const auto penalty = hinge_below(j_bar, static_cast<T>(dual.j_lb));
  return scale(add(s_bar, scale(penalty, static_cast<T>(dual.lambda))), T(-1));
}

// lambda <- max(0, lambda + eta (j_lb - j_bar)) when |j_bar - j_lb| > eps.
inline DualState dual_update(DualState dual, double j_bar) {
  const double violation = j_bar - dual.j_lb;
  if (std::abs(violation) > dual.eps)
    dual.lambda = std::max(0.0, dual.lambda + dual.eta * (dual.j_lb - j_bar));
  return dual;
}

template <typename T>
struct BatchLossReport {
  autonet::Tensor<T> loss;
  autonet::Tensor<T> s_bar;
  autonet::Tensor<T> j_bar;
  autonet::Tensor<T> normalized_sum;  // S~_k
  StreamRates<T> streams;
  double violation = 0.0;  // j_bar - j_lb
};

// Full loss for one batch of raw network outputs.
template <typename T>
BatchLossReport<T> batch_loss(const ChannelBatch<T>& channels, const autonet::Tensor<T>& raw_bf,
                              const DualState& dual, LossDiagnostics* diag = nullptr) {
  BatchLossReport<T> rep;
  rep.streams = graph_rates(channels, raw_bf, diag);
  rep.normalized_sum = maxmin_normalize(rep.streams.sum_rate, diag);
  rep.s_bar = autonet::mean(rep.normalized_sum);
  rep.j_bar = autonet::mean(rep.streams.jain);
  rep.loss = hinge_loss(rep.s_bar, rep.j_bar, dual);
  rep.violation = static_cast<double>(rep.j_bar.item()) - dual.j_lb;
  return rep;
}

}  // namespace fairbf
