#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "graphcaps/error.hpp"
#include "graphcaps/nn/parameter.hpp"
#include "graphcaps/random.hpp"

namespace graphcaps::analysis {

using nn::Matrix;

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t out_dims = 2;
  std::size_t iterations = 1000;
  /// 0 picks max(m / (4 * early_exaggeration), 50), which stays stable for small m.
  double learning_rate = 0.0;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;
  std::size_t momentum_switch = 250;
  double init_std = 1e-4;
  std::uint64_t seed = 1;
};

/// Squared Euclidean distances between the rows of `x`.
inline Matrix squared_distances(Matrix const& x) {
  Eigen::VectorXd const sq = x.rowwise().squaredNorm();
  Matrix d = (-2.0 * x * x.transpose()).colwise() + sq;
  d.rowwise() += sq.transpose();
  d = d.cwiseMax(0.0);
  d.diagonal().setZero();
  return d;
}

/// Row-conditional affinities p_{j|i} with one Gaussian precision per point.
struct ConditionalAffinities {
  Matrix p;
  /// beta_i = 1 / (2 sigma_i^2).
  std::vector<double> beta;
  /// Shannon entropy of row i in nats; the target is log(perplexity).
  std::vector<double> entropy;
};

/// Entropy tolerance of the per-point precision search, in nats.
inline constexpr double kSigmaSearchTolerance = 1e-10;

/// Bisection on log(beta_i) until each row's entropy equals log(perplexity).
inline ConditionalAffinities conditional_affinities(Matrix const& sq_dist, double perplexity) {
  auto const m = static_cast<std::size_t>(sq_dist.rows());
  if (!(perplexity > 1.0) || !(perplexity < static_cast<double>(m))) {
    throw DomainError("perplexity " + std::to_string(perplexity) + " is infeasible for " + std::to_string(m) +
                      " points (need 1 < perplexity < m)");
  }
  double const target = std::log(perplexity);
  ConditionalAffinities out{Matrix::Zero(sq_dist.rows(), sq_dist.cols()), std::vector<double>(m),
                            std::vector<double>(m)};
  std::vector<double> w(m);
  for (std::size_t i = 0; i < m; ++i) {
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      dmin = std::min(dmin, sq_dist(i, j));
      dmax = std::max(dmax, sq_dist(i, j));
    }
    if (!(dmax > 0.0)) throw DomainError("point " + std::to_string(i) + " coincides with every other point");
    // Entropy of row i at precision beta; distances are shifted by dmin for stability.
    auto entropy_at = [&](double beta) {
      double z = 0.0, s = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        w[j] = j == i ? 0.0 : std::exp(-beta * (sq_dist(i, j) - dmin));
        z += w[j];
        s += w[j] * (sq_dist(i, j) - dmin);
      }
      return std::log(z) + beta * s / z;
    };
    // Entropy falls monotonically in beta from log(m - 1) towards log(#nearest ties).
    double lo = std::log(1e-20 / dmax), hi = std::log(1e20 / dmax);
    double beta = std::exp(0.5 * (lo + hi));
    double h = entropy_at(beta);
    for (int it = 0; it < 400 && std::abs(h - target) > kSigmaSearchTolerance; ++it) {
      double const mid = 0.5 * (lo + hi);
      if (h > target) {
        lo = mid;
      } else {
        hi = mid;
      }
      beta = std::exp(0.5 * (lo + hi));
      h = entropy_at(beta);
    }
    if (std::abs(h - target) > 1e-6) {
      throw DomainError("perplexity " + std::to_string(perplexity) + " is unreachable for point " +
                        std::to_string(i) + " (entropy " + std::to_string(h) + " nats, target " +
                        std::to_string(target) + ")");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += w[j];
    for (std::size_t j = 0; j < m; ++j) out.p(i, j) = w[j] / z;
    out.beta[i] = beta;
    out.entropy[i] = h;
  }
  return out;
}

/// Symmetric joint probabilities P = (P_cond + P_cond^T) / (2m).
inline Matrix joint_probabilities(Matrix const& conditional) {
  auto const m = static_cast<double>(conditional.rows());
  return (conditional + conditional.transpose()) / (2.0 * m);
}

/// Student-t affinities (1 + |y_i - y_j|^2)^-1 with a zero diagonal.
inline Matrix student_kernel(Matrix const& y) {
  Matrix k = (1.0 + squared_distances(y).array()).inverse().matrix();
  k.diagonal().setZero();
  return k;
}

/// KL(P || Q) for the layout `y`; zero entries of P contribute nothing.
inline double kl_divergence(Matrix const& p, Matrix const& y) {
  Matrix const k = student_kernel(y);
  double const z = k.sum();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (i != j && p(i, j) > 0.0) kl += p(i, j) * std::log(p(i, j) * z / k(i, j));
    }
  }
  return kl;
}

/// dKL/dy for joint probabilities `p` (already exaggerated if wanted).
inline Matrix kl_gradient(Matrix const& p, Matrix const& y) {
  Matrix const k = student_kernel(y);
  double const z = k.sum();
  Matrix const w = ((p.array() - k.array() / z) * k.array()).matrix();
  Eigen::VectorXd const rows = w.rowwise().sum();
  return 4.0 * (rows.asDiagonal() * y - w * y);
}

struct TsneResult {
  Matrix coords;
  double initial_kl = 0.0;
  double final_kl = 0.0;
  std::vector<double> entropy;
  TsneConfig config;
};

/// Exact t-SNE: Gaussian input affinities, Student-t output kernel, gradient
/// descent with momentum, per-coordinate gains and early exaggeration.
inline TsneResult tsne(Matrix const& points, TsneConfig const& cfg) {
  auto const m = points.rows();
  if (m < 3) throw DomainError("t-SNE needs at least 3 points");
  if (cfg.out_dims < 1) throw DomainError("t-SNE needs at least one output dimension");
  if (!points.allFinite()) throw DomainError("t-SNE input contains non-finite values");
  auto const d = squared_distances(points);
  if (!(d.maxCoeff() > 0.0)) throw DomainError("all input points are identical (zero variance)");
  auto cond = conditional_affinities(d, cfg.perplexity);
  Matrix const p = joint_probabilities(cond.p);

  TsneResult r;
  r.config = cfg;
  r.entropy = std::move(cond.entropy);
  Rng rng(cfg.seed);
  auto const dims = static_cast<Eigen::Index>(cfg.out_dims);
  Matrix y(m, dims);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index c = 0; c < dims; ++c) y(i, c) = cfg.init_std * standard_normal(rng);
  }
  r.initial_kl = kl_divergence(p, y);

  double const eta = cfg.learning_rate > 0.0
                        ? cfg.learning_rate
                        : std::max(static_cast<double>(m) / (4.0 * cfg.early_exaggeration), 50.0);
  Matrix velocity = Matrix::Zero(m, dims);
  Matrix gains = Matrix::Ones(m, dims);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    double const exaggeration = it < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
    double const momentum = it < cfg.momentum_switch ? cfg.momentum_initial : cfg.momentum_final;
    Matrix const grad = kl_gradient(p * exaggeration, y);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index c = 0; c < dims; ++c) {
        bool const same_sign = (grad(i, c) > 0.0) == (velocity(i, c) > 0.0);
        gains(i, c) = std::max(0.01, same_sign ? gains(i, c) * 0.8 : gains(i, c) + 0.2);
      }
    }
    velocity = momentum * velocity - eta * gains.cwiseProduct(grad);
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }
  r.final_kl = kl_divergence(p, y);
  r.coords = std::move(y);
  return r;
}

}  // namespace graphcaps::analysis
