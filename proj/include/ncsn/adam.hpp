#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ncsn/autodiff.hpp"
#include "ncsn/tensor.hpp"

namespace ncsn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  AdamState() = default;
  AdamState(AdamConfig c, const std::vector<ad::Var>& params) : config(c) {
    for (const auto& p : params) {
      m.emplace_back(p.value().shape());
      v.emplace_back(p.value().shape());
    }
  }
};

// Bias-corrected Adam update applied in place to parameter leaves.
inline void adam_step(std::vector<ad::Var>& params, const std::vector<Tensor>& grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw ShapeError("adam: " + std::to_string(params.size()) + " parameters, " + std::to_string(grads.size()) +
                     " gradients, " + std::to_string(state.m.size()) + " moment slots");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!(grads[i].shape() == params[i].shape()) || !(state.m[i].shape() == params[i].shape()))
      throw ShapeError("adam: parameter " + std::to_string(i) + " has shape " + params[i].shape().str() +
                       " but gradient " + grads[i].shape().str());
  ++state.t;
  const auto& c = state.config;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].mutable_value();
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

inline void adam_step(std::vector<ad::Var>& params, const ad::GradientMap& grads, AdamState& state) {
  std::vector<Tensor> g;
  g.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) g.push_back(grads.at_index(i));
  adam_step(params, g, state);
}

}  // namespace ncsn
