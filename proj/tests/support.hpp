#pragma once

#include <array>
#include <complex>
#include <random>
#include <vector>

#include "fairbf/channel.hpp"
#include "fairbf/complex_core.hpp"

namespace fairbf::testing {

using Mat3 = std::array<std::array<cplx, 3>, 3>;

inline cplx gauss_c(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  return {n(rng), n(rng)};
}

inline CVec random_cvec(std::size_t n, std::mt19937_64& rng) {
  CVec v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = gauss_c(rng);
  return v;
}

// Sample with i.i.d. CN(0, gain_u) rows and common noise sigma2.
inline ChannelSample random_sample(std::size_t n_u, std::size_t n_t, std::mt19937_64& rng,
                                   double sigma2 = 1.0, bool spread_gains = true) {
  ChannelSample s;
  std::uniform_real_distribution<double> g(0.1, 10.0);
  for (std::size_t u = 0; u < n_u; ++u) {
    auto h = random_cvec(n_t, rng);
    if (spread_gains) h *= std::sqrt(g(rng));
    s.h.push_back(std::move(h));
    s.sigma2.push_back(sigma2);
    s.positions.push_back({50.0 + 10.0 * static_cast<double>(u), 0.0});
  }
  return s;
}

// Inverse of a general 3x3 complex matrix by cofactor expansion.
inline Mat3 adjugate_inverse(const Mat3& a) {
  auto c = [&](int i, int j) {
    const int r0 = (i + 1) % 3, r1 = (i + 2) % 3, c0 = (j + 1) % 3, c1 = (j + 2) % 3;
    return a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
  };
  const cplx det = a[0][0] * c(0, 0) + a[0][1] * c(0, 1) + a[0][2] * c(0, 2);
  Mat3 inv{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) inv[i][j] = c(j, i) / det;
  return inv;
}

inline Mat3 to_mat3(const HermMat& m) {
  Mat3 a{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a[i][j] = m(i, j);
  return a;
}

inline CVec mul3(const Mat3& a, const CVec& x) {
  CVec y(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) y[i] += a[i][j] * x[j];
  return y;
}

inline double rel_residual(const HermMat& a, const CVec& x, const CVec& b) {
  const CVec ax = a.apply(x);
  double num = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) num += std::norm(ax[i] - b[i]);
  return std::sqrt(num) / b.norm();
}

}  // namespace fairbf::testing
