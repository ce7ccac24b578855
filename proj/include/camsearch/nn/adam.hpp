#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "camsearch/error.hpp"
#include "camsearch/nn/tensor.hpp"

namespace camsearch::nn {

struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One Adam update with bias correction. Throws (and leaves every parameter
/// untouched) when any gradient is non-finite.
inline void adam_step(std::span<Parameter* const> params, AdamState& state) {
  for (const Parameter* p : params)
    for (double g : p->grad)
      if (!std::isfinite(g)) throw Error(errc::kNonFinite, "adam_step: non-finite gradient in " + p->name);

  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->size(), 0.0);
      state.v[i].assign(params[i]->size(), 0.0);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i)
    if (state.m[i].size() != params[i]->size())
      throw Error(errc::kShapeMismatch, "adam_step: moment buffer shape differs for " + params[i]->name);

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      p.value[k] -= state.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
    }
  }
}

inline double grad_norm(std::span<Parameter* const> params) {
  double s = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad) s += g * g;
  return std::sqrt(s);
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  const double n = grad_norm(params);
  if (n > max_norm && n > 0.0) {
    const double s = max_norm / n;
    for (Parameter* p : params)
      for (double& g : p->grad) g *= s;
  }
  return n;
}

inline void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace camsearch::nn
