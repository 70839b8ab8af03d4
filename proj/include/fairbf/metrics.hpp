#pragma once

// Evaluation-side rate metrics in double precision. These are also the
// reference the in-graph loss is checked against.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "fairbf/channel.hpp"
#include "fairbf/complex_core.hpp"
#include "fairbf/error.hpp"

namespace fairbf {

// Unit-norm directions plus the common per-user transmit power.
struct BeamformerSet {
  std::vector<CVec> f_tilde;
  double power_per_user = 1.0;

  std::size_t n_u() const noexcept { return f_tilde.size(); }
};

struct RateReport {
  std::vector<double> sinr;
  std::vector<double> rate;  // bit/s/Hz
  double sum_rate = 0.0;
  double jain = 0.0;
};

// (sum R)^2 / (N sum R^2)
inline double jain_index(std::span<const double> rates) {
  if (rates.empty()) throw DimensionError("jain_index: empty rate list");
  double s = 0.0, s2 = 0.0;
  for (double r : rates) {
    s += r;
    s2 += r * r;
  }
  if (!(s2 > 0.0)) throw DimensionError("jain_index: undefined for all-zero rates");
  return s * s / (static_cast<double>(rates.size()) * s2);
}

inline RateReport evaluate_rates(const ChannelSample& sample, const BeamformerSet& bf) {
  const std::size_t nu = sample.n_u();
  if (bf.n_u() != nu)
    throw DimensionError(detail::concat("evaluate_rates: ", bf.n_u(),
                                        " beamformers for ", nu, " users"));
  if (sample.sigma2.size() != nu)
    throw DimensionError("evaluate_rates: noise list does not match user count");
  for (const auto& f : bf.f_tilde)
    if (f.size() != sample.n_t())
      throw DimensionError(detail::concat("evaluate_rates: beamformer length ", f.size(),
                                          ", channel length ", sample.n_t()));
  RateReport rep;
  rep.sinr.resize(nu);
  rep.rate.resize(nu);
  const double p = bf.power_per_user;
  for (std::size_t u = 0; u < nu; ++u) {
    double signal = 0.0, interference = 0.0;
    for (std::size_t l = 0; l < nu; ++l) {
      const double g = p * std::norm(hdot(sample.h[u], bf.f_tilde[l]));
      (l == u ? signal : interference) += g;
    }
    rep.sinr[u] = signal / (interference + sample.sigma2[u]);
    rep.rate[u] = std::log2(1.0 + rep.sinr[u]);
  }
  rep.sum_rate = std::accumulate(rep.rate.begin(), rep.rate.end(), 0.0);
  rep.jain = rep.sum_rate > 0.0 ? jain_index(rep.rate) : 0.0;
  return rep;
}

struct EcdfPoint {
  double value;
  double prob;
};

// Sorted ascending with prob_i = i/n (1-based i).
inline std::vector<EcdfPoint> ecdf(std::span<const double> values) {
  if (values.empty()) throw DimensionError("ecdf: empty input");
  std::vector<double> v(values.begin(), values.end());
  std::stable_sort(v.begin(), v.end());
  std::vector<EcdfPoint> out(v.size());
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = {v[i], static_cast<double>(i + 1) / n};
  return out;
}

}  // namespace fairbf
