#pragma once

// Closed-form multi-user beamformers: MRT, ZF, conventional SLNR and
// inverse-gain weighted SLNR.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "fairbf/channel.hpp"
#include "fairbf/complex_core.hpp"
#include "fairbf/metrics.hpp"

namespace fairbf {

struct WslnrWeights {
  std::vector<double> omega;
  double alpha = 0.0;
};

inline BeamformerSet mrt(const ChannelSample& sample, double power_per_user = 1.0) {
  sample.validate();
  BeamformerSet bf{{}, power_per_user};
  bf.f_tilde.reserve(sample.n_u());
  for (const auto& h : sample.h) bf.f_tilde.push_back(normalized(h));
  return bf;
}

inline constexpr double kZfMaxCondition = 1e10;

// Columns of H^H (H H^H)^{-1}, unit-normalized. Rows of H are h_u^H.
inline BeamformerSet zf(const ChannelSample& sample, double power_per_user = 1.0) {
  sample.validate();
  const std::size_t nu = sample.n_u();
  const std::size_t nt = sample.n_t();
  if (nu > nt)
    throw RankDeficientError(detail::concat("zf: ", nu, " users exceed ", nt,
                                            " antennas; channel matrix cannot have full row rank"));
  HermMat gram(nu);
  for (std::size_t i = 0; i < nu; ++i)
    for (std::size_t j = 0; j < nu; ++j) gram(i, j) = hdot(sample.h[i], sample.h[j]);
  std::optional<Cholesky> chol;
  try {
    chol.emplace(gram);
  } catch (const FactorizationError& e) {
    throw RankDeficientError(detail::concat(
        "zf: channel Gram matrix is singular (pivot ", e.pivot(), "); rank-deficient channel"));
  }
  double dmin = chol->diag(0), dmax = chol->diag(0);
  for (std::size_t i = 1; i < nu; ++i) {
    dmin = std::min(dmin, chol->diag(i));
    dmax = std::max(dmax, chol->diag(i));
  }
  // max/min L_ii is a lower bound on cond(H).
  const double cond_estimate = dmax / dmin;
  if (!(cond_estimate < kZfMaxCondition))
    throw RankDeficientError(detail::concat("zf: channel matrix is numerically rank-deficient "
                                            "(condition estimate ", cond_estimate, ")"));
  BeamformerSet bf{std::vector<CVec>(nu, CVec(nt)), power_per_user};
  for (std::size_t l = 0; l < nu; ++l) {
    CVec e(nu);
    e[l] = 1.0;
    const CVec x = chol->solve(e);
    CVec f(nt);
    for (std::size_t u = 0; u < nu; ++u)
      for (std::size_t n = 0; n < nt; ++n) f[n] += sample.h[u][n] * x[u];
    bf.f_tilde[l] = normalized(f);
  }
  return bf;
}

inline WslnrWeights wslnr_weights(const ChannelSample& sample, double alpha) {
  if (!(alpha >= 0.0)) throw ConfigError("wslnr: alpha must be nonnegative");
  sample.validate();
  const std::size_t nu = sample.n_u();
  WslnrWeights w{std::vector<double>(nu), alpha};
  if (alpha == 0.0) {
    w.omega.assign(nu, 1.0 / static_cast<double>(nu));
    return w;
  }
  // Scale by the smallest gain first so large alpha cannot overflow.
  std::vector<double> gains(nu);
  for (std::size_t l = 0; l < nu; ++l) gains[l] = sample.h[l].squared_norm();
  const double gref = *std::min_element(gains.begin(), gains.end());
  double total = 0.0;
  for (std::size_t l = 0; l < nu; ++l) {
    w.omega[l] = std::pow(gains[l] / gref, -alpha);
    total += w.omega[l];
  }
  for (auto& o : w.omega) o /= total;
  return w;
}

// f_u ∝ (sum_{l != u} omega_l h_l h_l^H + sigma^2 I)^{-1} h_u
inline BeamformerSet leakage_beamformer(const ChannelSample& sample,
                                        const std::vector<double>& omega,
                                        double power_per_user) {
  sample.validate();
  const std::size_t nu = sample.n_u();
  const double noise = sample.common_noise();
  BeamformerSet bf{{}, power_per_user};
  bf.f_tilde.reserve(nu);
  std::vector<CVec> others;
  std::vector<double> weights;
  for (std::size_t u = 0; u < nu; ++u) {
    others.clear();
    weights.clear();
    for (std::size_t l = 0; l < nu; ++l) {
      if (l == u) continue;
      others.push_back(sample.h[l]);
      weights.push_back(omega[l]);
    }
    const HermMat a = rank1_accumulate(others, weights, noise, sample.n_t());
    bf.f_tilde.push_back(normalized(pd_solve(a, sample.h[u])));
  }
  return bf;
}

inline BeamformerSet wslnr(const ChannelSample& sample, double alpha,
                           double power_per_user = 1.0) {
  return leakage_beamformer(sample, wslnr_weights(sample, alpha).omega, power_per_user);
}

// Unweighted leakage (omega_l = 1).
inline BeamformerSet slnr(const ChannelSample& sample, double power_per_user = 1.0) {
  return leakage_beamformer(sample, std::vector<double>(sample.n_u(), 1.0), power_per_user);
}

}  // namespace fairbf
