#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "graphcaps/models/common.hpp"
#include "graphcaps/nn/conv.hpp"
#include "graphcaps/nn/dense.hpp"
#include "graphcaps/nn/loss.hpp"

namespace graphcaps::models {

using graphcaps::to_string;

/// A conv layer of the baseline. A zero extent means "everything that is left"
/// along that axis; row extents larger than the remaining height are clamped.
struct CnnConv {
  std::size_t filters = 16;
  std::size_t rows = 1;
  std::size_t cols = 0;
  std::size_t stride = 1;
};

struct CnnConfig {
  // The first layer spans a whole receptive field, the second slides over anchors.
  std::vector<CnnConv> convs{{16, 1, 0, 1}, {8, 10, 1, 1}};
  std::vector<std::size_t> dense{128};
  double dropout = 0.5;
};

/// Receptive-field CNN baseline: conv stack, dense ReLU layers, dropout,
/// and a softmax output trained with cross-entropy.
class Cnn {
 public:
  Cnn(std::size_t w, std::size_t k, std::size_t channels, std::size_t classes, CnnConfig cfg = {})
      : cfg_(std::move(cfg)), w_(w), k_(k), channels_(channels), classes_(classes), dropout_(cfg_.dropout) {
    if (w == 0 || k == 0 || channels == 0) throw ConfigError("input extents must be positive");
    if (classes < 2) throw ConfigError("need at least 2 classes, got " + std::to_string(classes));
    if (cfg_.convs.empty()) throw ConfigError("baseline needs at least one conv layer");
    std::size_t h = w, wd = k, c = channels;
    for (std::size_t i = 0; i < cfg_.convs.size(); ++i) {
      auto const& spec = cfg_.convs[i];
      if (spec.filters == 0 || spec.stride == 0) throw ConfigError("conv filters and stride must be positive");
      std::size_t const kh = spec.rows == 0 ? h : std::min(spec.rows, h);
      std::size_t const kw = spec.cols == 0 ? wd : spec.cols;
      if (kw > wd) {
        throw ConfigError("baseline conv " + std::to_string(i + 1) + " spans " + std::to_string(kw) +
                          " columns but only " + std::to_string(wd) + " remain");
      }
      convs_.emplace_back("cnn.conv" + std::to_string(i + 1), kh, kw, c, spec.filters, spec.stride);
      h = (h - kh) / spec.stride + 1;
      wd = (wd - kw) / spec.stride + 1;
      c = spec.filters;
    }
    std::size_t in = h * wd * c;
    flat_ = in;
    for (std::size_t i = 0; i < cfg_.dense.size(); ++i) {
      if (cfg_.dense[i] == 0) throw ConfigError("dense widths must be positive");
      dense_.emplace_back("cnn.dense" + std::to_string(i + 1), in, cfg_.dense[i]);
      in = cfg_.dense[i];
    }
    dense_.emplace_back("cnn.out", in, classes);
  }

  CnnConfig const& config() const { return cfg_; }
  std::size_t num_classes() const { return classes_; }
  /// Width of the representation that feeds the output layer.
  std::size_t inner_size() const { return dense_.size() > 1 ? cfg_.dense.back() : flat_; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& c : convs_) c.init(rng);
    for (std::size_t i = 0; i + 1 < dense_.size(); ++i) dense_[i].init_he(rng);
    dense_.back().init_glorot(rng);
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> out;
    for (auto& c : convs_) {
      out.push_back(&c.weight);
      out.push_back(&c.bias);
    }
    for (auto& d : dense_) {
      out.push_back(&d.weight);
      out.push_back(&d.bias);
    }
    return out;
  }

  /// Class scores (batch x C). Dropout is active only when `rng` is given.
  Tensor forward(Tensor const& x, Rng* rng = nullptr) {
    check_input(x);
    std::size_t const batch = x.dim(0);
    acts_.clear();
    Tensor h = x;
    for (auto& c : convs_) {
      h = nn::relu(c.forward(h));
      acts_.push_back(h);
    }
    h = h.reshaped({batch, flat_});
    for (std::size_t i = 0; i + 1 < dense_.size(); ++i) {
      h = nn::relu(dense_[i].forward(h));
      acts_.push_back(h);
    }
    inner_ = h;
    Rng none(0);
    h = dropout_.forward(std::move(h), rng != nullptr, rng ? *rng : none);
    return dense_.back().forward(h);
  }

  LossParts loss(Tensor const& x, std::span<int const> y) {
    auto scores = forward(x);
    return batch_loss(scores, y, nullptr);
  }

  LossParts loss_and_grad(Tensor const& x, std::span<int const> y, Rng& rng) {
    auto scores = forward(x, &rng);
    Tensor g(scores.shape());
    auto parts = batch_loss(scores, y, &g);
    zero_grads(parameters());
    g = dropout_.backward(dense_.back().backward(g, true));
    std::size_t a = acts_.size();
    for (std::size_t i = dense_.size() - 1; i-- > 0;) {
      g = dense_[i].backward(nn::relu_backward(acts_[--a], std::move(g)), true);
    }
    for (std::size_t i = convs_.size(); i-- > 0;) {
      auto const& act = acts_[--a];
      g = convs_[i].backward(nn::relu_backward(act, g.reshaped(act.shape())), i > 0);
    }
    return parts;
  }

  std::vector<int> predict(Tensor const& x) {
    auto scores = forward(x);
    std::vector<int> y(scores.dim(0));
    for (std::size_t b = 0; b < y.size(); ++b) y[b] = argmax(scores.values().subspan(b * classes_, classes_));
    return y;
  }

  /// Activations of the last hidden dense layer (inference mode), one row per sample.
  Tensor inner_activations(Tensor const& x) {
    forward(x);
    return inner_;
  }

 private:
  void check_input(Tensor const& x) const {
    if (x.rank() != 4 || x.dim(1) != w_ || x.dim(2) != k_ || x.dim(3) != channels_) {
      throw ShapeError("baseline built for batch x " + std::to_string(w_) + "x" + std::to_string(k_) + "x" +
                       std::to_string(channels_) + ", got " + to_string(x.shape()));
    }
  }

  LossParts batch_loss(Tensor const& scores, std::span<int const> y, Tensor* grad) const {
    std::size_t const batch = scores.dim(0);
    if (y.size() != batch) throw ShapeError("label count does not match batch size");
    double const inv = 1.0 / static_cast<double>(batch);
    LossParts parts;
    for (std::size_t b = 0; b < batch; ++b) {
      if (y[b] < 0 || static_cast<std::size_t>(y[b]) >= classes_) throw DomainError("class label out of range");
      std::span<double> g = grad ? grad->values().subspan(b * classes_, classes_) : std::span<double>{};
      parts.classification +=
          inv * nn::softmax_cross_entropy(scores.values().subspan(b * classes_, classes_), static_cast<std::size_t>(y[b]), g);
      for (double& v : g) v *= inv;
    }
    parts.total = parts.classification;
    return parts;
  }

  CnnConfig cfg_;
  std::size_t w_, k_, channels_, classes_;
  std::size_t flat_ = 0;
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::Dense> dense_;
  nn::Dropout dropout_;
  std::vector<Tensor> acts_;
  Tensor inner_;
};

inline Cnn build_cnn(std::size_t w, std::size_t k, std::size_t channels, std::size_t classes, CnnConfig const& cfg = {},
                     std::uint64_t seed = 0) {
  Cnn net(w, k, channels, classes, cfg);
  net.init(seed);
  return net;
}

}  // namespace graphcaps::models
