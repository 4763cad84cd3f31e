#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "graphcaps/nn/parameter.hpp"

namespace graphcaps::nn {

struct AdamConfig {
  double base_lr = 0.001;
  double decay = 0.0;     // per-epoch exponent coefficient
  double min_lr = 1e-6;   // floor on the decayed rate
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// base_lr * exp(-decay * epoch), floored at min_lr (or at base_lr if that is smaller).
inline double learning_rate(AdamConfig const& cfg, std::size_t epoch) {
  double const lr = cfg.base_lr * std::exp(-cfg.decay * static_cast<double>(epoch));
  return std::max(lr, std::min(cfg.min_lr, cfg.base_lr));
}

struct AdamState {
  std::size_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update of every parameter from its accumulated gradient.
///
/// A non-finite gradient aborts before anything is modified.
inline void adam_step(std::vector<Parameter*> const& params, AdamState& state, AdamConfig const& cfg,
                      std::size_t epoch) {
  for (auto const* p : params) {
    if (p->grad.shape() != p->value.shape()) throw ShapeError("gradient shape mismatch for " + p->name);
    for (double g : p->grad.values()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + p->name);
    }
  }
  if (state.m.empty()) {
    for (auto const* p : params) {
      state.m.emplace_back(p->value.size(), 0.0);
      state.v.emplace_back(p->value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("optimizer state does not match parameter list");
  ++state.t;
  double const lr = learning_rate(cfg, epoch);
  double const c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double const c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.value.size()) throw ShapeError("optimizer state does not match " + p.name);
    double* x = p.value.data();
    double const* g = p.grad.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  }
}

}  // namespace graphcaps::nn
