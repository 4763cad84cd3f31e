#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "graphcaps/nn/tensor.hpp"
#include "graphcaps/random.hpp"

namespace graphcaps::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<Matrix const>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<Eigen::VectorXd const>;

/// Views a tensor's storage as a rows x cols row-major matrix.
inline MatrixMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  if (rows * cols != t.size()) {
    throw ShapeError("cannot view " + to_string(t.shape()) + " as " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  return {t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

inline ConstMatrixMap as_matrix(Tensor const& t, std::size_t rows, std::size_t cols) {
  if (rows * cols != t.size()) {
    throw ShapeError("cannot view " + to_string(t.shape()) + " as " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  return {t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

/// A trainable array together with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(std::move(shape)) {}

  void zero_grad() { grad.fill(0.0); }
};

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double const a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : t.values()) x = (2.0 * uniform01(rng) - 1.0) * a;
}

/// Uniform(-a, a) with a = sqrt(6 / fan_in); suited to ReLU layers.
inline void he_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  double const a = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& x : t.values()) x = (2.0 * uniform01(rng) - 1.0) * a;
}

inline void normal_init(Tensor& t, double stddev, Rng& rng) {
  for (double& x : t.values()) x = stddev * standard_normal(rng);
}

inline std::size_t parameter_count(std::vector<Parameter*> const& params) {
  std::size_t n = 0;
  for (auto const* p : params) n += p->value.size();
  return n;
}

}  // namespace graphcaps::nn
