#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "graphcaps/nn/tensor.hpp"

namespace graphcaps::nn {

struct MarginParams {
  double lambda = 0.5;
  double m_plus = 0.9;
  double m_minus = 0.1;
};

// Every loss takes an optional `grad` span; when non-empty it receives the
// derivative of the returned value with respect to the first argument.

/// Sum over classes of T_k max(0, m+ - |v_k|)^2 + lambda (1 - T_k) max(0, |v_k| - m-)^2.
inline double margin_loss(std::span<double const> norms, std::size_t target, MarginParams const& p = {},
                          std::span<double> grad = {}) {
  if (target >= norms.size()) throw DomainError("margin loss target out of range");
  double loss = 0.0;
  for (std::size_t k = 0; k < norms.size(); ++k) {
    double g = 0.0;
    if (k == target) {
      double const h = std::max(0.0, p.m_plus - norms[k]);
      loss += h * h;
      g = -2.0 * h;
    } else {
      double const h = std::max(0.0, norms[k] - p.m_minus);
      loss += p.lambda * h * h;
      g = 2.0 * p.lambda * h;
    }
    if (!grad.empty()) grad[k] = g;
  }
  return loss;
}

/// -log of the softmax probability of `target` over arbitrary scores.
inline double softmax_cross_entropy(std::span<double const> scores, std::size_t target,
                                    std::span<double> grad = {}) {
  if (target >= scores.size()) throw DomainError("cross-entropy target out of range");
  double const top = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double x : scores) z += std::exp(x - top);
  double const log_z = top + std::log(z);
  if (!grad.empty()) {
    for (std::size_t k = 0; k < scores.size(); ++k) grad[k] = std::exp(scores[k] - log_z) - (k == target ? 1.0 : 0.0);
  }
  return log_z - scores[target];
}

/// Two-class cross-entropy on capsule norms mapped to probabilities by softmax.
inline double binary_margin_loss(std::span<double const> norms, std::size_t target, std::span<double> grad = {}) {
  if (norms.size() != 2) {
    throw DomainError("binary cross-entropy loss needs exactly 2 classes, got " + std::to_string(norms.size()));
  }
  return softmax_cross_entropy(norms, target, grad);
}

/// Mean squared difference over all elements.
inline double reconstruction_loss(std::span<double const> reconstructed, std::span<double const> original,
                                  std::span<double> grad = {}) {
  if (reconstructed.size() != original.size() || original.empty()) {
    throw ShapeError("reconstruction has " + std::to_string(reconstructed.size()) + " values, original " +
                     std::to_string(original.size()));
  }
  double const scale = 1.0 / static_cast<double>(original.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    double const d = reconstructed[i] - original[i];
    sum += d * d;
    if (!grad.empty()) grad[i] = 2.0 * d * scale;
  }
  return sum * scale;
}

inline double reconstruction_loss(Tensor const& reconstructed, Tensor const& original) {
  if (reconstructed.shape() != original.shape()) {
    throw ShapeError("reconstruction shape " + to_string(reconstructed.shape()) + " differs from " +
                     to_string(original.shape()));
  }
  return reconstruction_loss(reconstructed.values(), original.values());
}

/// Classification loss plus the scaled reconstruction term.
constexpr double total_loss(double ml, double mse, double alpha = 1.0) noexcept { return ml + alpha * mse; }

}  // namespace graphcaps::nn
