#pragma once

#include <cmath>
#include <string>

#include "graphcaps/nn/parameter.hpp"

namespace graphcaps::nn {

/// Fully connected layer y = x W + b over a (batch x in) input.
class Dense {
 public:
  Dense() = default;
  Dense(std::string const& name, std::size_t in, std::size_t out)
      : weight(name + ".weight", {in, out}), bias(name + ".bias", {out}) {}

  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }

  void init_he(Rng& rng) {
    he_uniform(weight.value, in_features(), rng);
    bias.value.fill(0.0);
  }
  void init_glorot(Rng& rng) {
    glorot_uniform(weight.value, in_features(), out_features(), rng);
    bias.value.fill(0.0);
  }

  /// `x` is any tensor whose size is a multiple of in_features.
  Tensor forward(Tensor const& x) {
    if (x.size() % in_features() != 0) {
      throw ShapeError("dense layer " + weight.name + " expects rows of " + std::to_string(in_features()) +
                       ", got " + to_string(x.shape()));
    }
    batch_ = x.size() / in_features();
    input_ = x;
    Tensor y({batch_, out_features()});
    auto out = as_matrix(y, batch_, out_features());
    out.noalias() = as_matrix(x, batch_, in_features()) * as_matrix(weight.value, in_features(), out_features());
    out.rowwise() += ConstVectorMap(bias.value.data(), static_cast<Eigen::Index>(out_features())).transpose();
    return y;
  }

  Tensor backward(Tensor const& dy, bool need_input_grad) {
    auto const d = as_matrix(dy, batch_, out_features());
    as_matrix(weight.grad, in_features(), out_features()).noalias() +=
        as_matrix(input_, batch_, in_features()).transpose() * d;
    VectorMap(bias.grad.data(), static_cast<Eigen::Index>(out_features())) += d.colwise().sum().transpose();
    if (!need_input_grad) return {};
    Tensor dx(input_.shape());
    as_matrix(dx, batch_, in_features()).noalias() =
        d * as_matrix(weight.value, in_features(), out_features()).transpose();
    return dx;
  }

  Parameter weight;
  Parameter bias;

 private:
  std::size_t batch_ = 0;
  Tensor input_;
};

inline Tensor relu(Tensor x) {
  for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
  return x;
}

/// Gradient through ReLU given the layer's output.
inline Tensor relu_backward(Tensor const& y, Tensor dy) {
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (!(y[i] > 0.0)) dy[i] = 0.0;
  }
  return dy;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double const e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(Tensor x) {
  for (double& v : x.values()) v = sigmoid(v);
  return x;
}

/// Gradient through the logistic function given its output.
inline Tensor sigmoid_backward(Tensor const& y, Tensor dy) {
  for (std::size_t i = 0; i < dy.size(); ++i) dy[i] *= y[i] * (1.0 - y[i]);
  return dy;
}

/// Inverted dropout: surviving units are scaled by 1 / (1 - rate).
class Dropout {
 public:
  explicit Dropout(double rate = 0.5) : rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout rate must lie in [0, 1)");
  }

  double rate() const { return rate_; }

  Tensor forward(Tensor x, bool training, Rng& rng) {
    mask_.assign(x.size(), 1.0);
    if (!training || rate_ == 0.0) return x;
    double const keep = 1.0 / (1.0 - rate_);
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask_[i] = uniform01(rng) < rate_ ? 0.0 : keep;
      x[i] *= mask_[i];
    }
    return x;
  }

  Tensor backward(Tensor dy) const {
    for (std::size_t i = 0; i < dy.size(); ++i) dy[i] *= mask_[i];
    return dy;
  }

 private:
  double rate_;
  std::vector<double> mask_;
};

}  // namespace graphcaps::nn
