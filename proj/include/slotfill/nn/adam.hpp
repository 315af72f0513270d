// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "slotfill/nn/core.hpp"

namespace slotfill::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment accumulators, keyed by parameter name.
template <typename S>
struct AdamState {
  long step = 0;
  std::map<std::string, std::vector<S>> m, v;
};

// One bias-corrected ADAM update over matched (parameter, gradient) views.
// A non-finite gradient aborts before any parameter is touched.
template <typename S>
inline void adam_step(const std::vector<ParamRef<S>>& params,
                      const std::vector<ParamRef<S>>& grads, AdamState<S>& state,
                      const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: mismatched views");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != grads[i].name || params[i].size() != grads[i].size())
      throw ShapeError("adam_step: mismatched view '" + params[i].name + "'");
    for (Eigen::Index j = 0; j < grads[i].size(); ++j)
      if (!std::isfinite(static_cast<double>(grads[i].data[j])))
        throw NonFiniteGradient("non-finite gradient in '" + grads[i].name + "'");
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[params[i].name];
    auto& v = state.v[params[i].name];
    if (m.empty()) m.assign(params[i].size(), S(0));
    if (v.empty()) v.assign(params[i].size(), S(0));
    for (Eigen::Index j = 0; j < params[i].size(); ++j) {
      const double g = static_cast<double>(grads[i].data[j]);
      m[j] = static_cast<S>(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g);
      v[j] = static_cast<S>(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      params[i].data[j] -= static_cast<S>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace slotfill::nn
