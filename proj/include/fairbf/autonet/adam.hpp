#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fairbf/autonet/tensor.hpp"
#include "fairbf/error.hpp"

namespace fairbf::autonet {

struct AdamParameters {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First and second moment estimates for one parameter list.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::size_t t = 0;
};

// Bias-corrected Adam update of every tensor in `params` from its gradient.
// Tensors that never received a gradient are left untouched.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state,
               const AdamParameters& hp) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  if (state.m.size() != params.size())
    throw DimensionError("adam_step: optimizer state does not match parameter list");
  ++state.t;
  const double corr1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(hp.beta1);
  const T b2 = static_cast<T>(hp.beta2);
  const T step = static_cast<T>(hp.lr / corr1);
  const T inv_sqrt_corr2 = static_cast<T>(1.0 / std::sqrt(corr2));
  const T eps = static_cast<T>(hp.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (state.m[i].size() != p.numel())
      throw DimensionError("adam_step: optimizer state shape mismatch");
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto x = p.data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      x[j] -= step * m[j] / (std::sqrt(v[j]) * inv_sqrt_corr2 + eps);
    }
  }
}

}  // namespace fairbf::autonet
