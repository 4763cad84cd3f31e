#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "graphcaps/models/common.hpp"
#include "graphcaps/nn/capsule.hpp"
#include "graphcaps/nn/conv.hpp"
#include "graphcaps/nn/dense.hpp"
#include "graphcaps/nn/loss.hpp"

namespace graphcaps::models {

using graphcaps::to_string;

enum class LossMode { Margin, BinaryCrossEntropy };

inline std::string_view to_string(LossMode m) { return m == LossMode::Margin ? "margin" : "binary_ce"; }

inline LossMode parse_loss_mode(std::string_view s) {
  if (s == "margin") return LossMode::Margin;
  if (s == "binary_ce" || s == "ce") return LossMode::BinaryCrossEntropy;
  throw ConfigError("unknown loss mode '" + std::string(s) + "' (expected margin or binary_ce)");
}

/// Cross-entropy on two-class problems, margin loss otherwise.
constexpr LossMode default_loss_mode(std::size_t num_classes) {
  return num_classes == 2 ? LossMode::BinaryCrossEntropy : LossMode::Margin;
}

struct CapsNetConfig {
  std::size_t conv_filters = 256;
  std::size_t conv_kernel = 3;
  std::size_t conv_stride = 1;
  std::size_t primary_dim = 8;
  std::size_t primary_channels = 32;
  std::size_t primary_kernel = 3;
  std::size_t primary_stride = 2;
  std::size_t class_dim = 16;
  std::vector<std::size_t> decoder_hidden{512, 1024};
  std::size_t routing_iters = 3;
  nn::MarginParams margin{};
  double alpha = 1.0;
  LossMode loss_mode = LossMode::BinaryCrossEntropy;
  /// Stddev of the capsule transforms; 0 picks 1 / sqrt(n_primary * primary_dim).
  double transform_init_std = 0.0;

  static CapsNetConfig paper() { return {}; }
  static CapsNetConfig small() {
    CapsNetConfig c;
    c.conv_filters = 64;
    c.primary_channels = 8;
    c.decoder_hidden = {128, 256};
    return c;
  }
};

/// Derived layer extents for one input geometry.
struct CapsNetGeometry {
  std::size_t w = 0, k = 0, channels = 0, classes = 0;
  std::size_t conv_h = 0, conv_w = 0;
  std::size_t primary_h = 0, primary_w = 0;
  std::size_t n_primary = 0;

  std::size_t input_size() const { return w * k * channels; }
};

inline CapsNetGeometry capsnet_geometry(std::size_t w, std::size_t k, std::size_t channels, std::size_t classes,
                                        CapsNetConfig const& cfg) {
  auto positive = [](std::size_t v, char const* what) {
    if (v == 0) throw ConfigError(std::string(what) + " must be positive");
  };
  positive(w, "width");
  positive(k, "field size");
  positive(channels, "channel count");
  positive(cfg.conv_filters, "conv filters");
  positive(cfg.conv_kernel, "conv kernel");
  positive(cfg.conv_stride, "conv stride");
  positive(cfg.primary_dim, "primary capsule dimension");
  positive(cfg.primary_channels, "primary capsule channels");
  positive(cfg.primary_kernel, "primary kernel");
  positive(cfg.primary_stride, "primary stride");
  positive(cfg.class_dim, "class capsule dimension");
  positive(cfg.routing_iters, "routing iterations");
  for (auto h : cfg.decoder_hidden) positive(h, "decoder width");
  if (classes < 2) throw ConfigError("need at least 2 classes, got " + std::to_string(classes));
  if (cfg.loss_mode == LossMode::BinaryCrossEntropy && classes != 2) {
    throw ConfigError("binary_ce loss needs 2 classes, dataset has " + std::to_string(classes));
  }

  CapsNetGeometry g{w, k, channels, classes, 0, 0, 0, 0, 0};
  auto fits = [](std::size_t extent, std::size_t kernel) { return kernel <= extent; };
  if (!fits(w, cfg.conv_kernel) || !fits(k, cfg.conv_kernel)) {
    throw ConfigError("conv " + std::to_string(cfg.conv_kernel) + "x" + std::to_string(cfg.conv_kernel) +
                      " does not fit the " + std::to_string(w) + "x" + std::to_string(k) + " input");
  }
  g.conv_h = (w - cfg.conv_kernel) / cfg.conv_stride + 1;
  g.conv_w = (k - cfg.conv_kernel) / cfg.conv_stride + 1;
  if (!fits(g.conv_h, cfg.primary_kernel) || !fits(g.conv_w, cfg.primary_kernel)) {
    throw ConfigError("primary capsule conv " + std::to_string(cfg.primary_kernel) + "x" +
                      std::to_string(cfg.primary_kernel) + " does not fit the " + std::to_string(g.conv_h) + "x" +
                      std::to_string(g.conv_w) + " map left by the first conv on a " + std::to_string(w) + "x" +
                      std::to_string(k) + " input");
  }
  g.primary_h = (g.conv_h - cfg.primary_kernel) / cfg.primary_stride + 1;
  g.primary_w = (g.conv_w - cfg.primary_kernel) / cfg.primary_stride + 1;
  g.n_primary = g.primary_h * g.primary_w * cfg.primary_channels;
  return g;
}

/// Conv layer, primary capsules, routed class capsules, and a masked
/// reconstruction decoder with a sigmoid output.
class CapsNet {
 public:
  struct Output {
    Tensor capsules;        // batch x C x class_dim
    Tensor norms;           // batch x C
    Tensor reconstruction;  // same shape as the input
  };

  CapsNet(std::size_t w, std::size_t k, std::size_t channels, std::size_t classes, CapsNetConfig cfg = {})
      : cfg_(std::move(cfg)), geom_(capsnet_geometry(w, k, channels, classes, cfg_)) {
    conv_ = nn::Conv2d("conv1", cfg_.conv_kernel, cfg_.conv_kernel, channels, cfg_.conv_filters, cfg_.conv_stride);
    primary_ = nn::Conv2d("primary", cfg_.primary_kernel, cfg_.primary_kernel, cfg_.conv_filters,
                          cfg_.primary_channels * cfg_.primary_dim, cfg_.primary_stride);
    transform_ = nn::CapsuleTransform("caps", geom_.n_primary, cfg_.primary_dim, classes, cfg_.class_dim);
    std::size_t in = classes * cfg_.class_dim;
    for (std::size_t i = 0; i < cfg_.decoder_hidden.size(); ++i) {
      decoder_.emplace_back("decoder" + std::to_string(i + 1), in, cfg_.decoder_hidden[i]);
      in = cfg_.decoder_hidden[i];
    }
    decoder_.emplace_back("decoder" + std::to_string(cfg_.decoder_hidden.size() + 1), in, geom_.input_size());
  }

  CapsNetConfig const& config() const { return cfg_; }
  CapsNetGeometry const& geometry() const { return geom_; }
  std::size_t num_classes() const { return geom_.classes; }
  std::size_t primary_size() const { return geom_.n_primary * cfg_.primary_dim; }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    conv_.init(rng);
    primary_.init(rng);
    double std = cfg_.transform_init_std;
    if (std <= 0.0) std = 1.0 / std::sqrt(static_cast<double>(geom_.n_primary * cfg_.primary_dim));
    transform_.init(std, rng);
    for (std::size_t i = 0; i + 1 < decoder_.size(); ++i) decoder_[i].init_he(rng);
    decoder_.back().init_glorot(rng);
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> out{&conv_.weight, &conv_.bias, &primary_.weight, &primary_.bias, &transform_.weight};
    for (auto& d : decoder_) {
      out.push_back(&d.weight);
      out.push_back(&d.bias);
    }
    return out;
  }

  /// Forward pass. The decoder sees only the capsule named by `mask`, or the
  /// predicted one when `mask` is empty.
  Output forward(Tensor const& x, std::span<int const> mask = {}) {
    std::size_t const batch = check_input(x);
    std::size_t const caps = geom_.classes * cfg_.class_dim;
    a1_ = nn::relu(conv_.forward(x));
    primary_pre_ = primary_.forward(a1_);
    primary_out_ = Tensor({batch, geom_.n_primary, cfg_.primary_dim});
    for (std::size_t c = 0; c < batch * geom_.n_primary; ++c) {
      nn::squash(primary_pre_.values().subspan(c * cfg_.primary_dim, cfg_.primary_dim),
                 primary_out_.values().subspan(c * cfg_.primary_dim, cfg_.primary_dim));
    }

    Output out{Tensor({batch, geom_.classes, cfg_.class_dim}), Tensor({batch, geom_.classes}), Tensor(x.shape())};
    std::size_t const pred = transform_.prediction_size();
    u_hat_.assign(batch * pred, 0.0);
    traces_.resize(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      auto u = primary_out_.values().subspan(b * primary_size(), primary_size());
      auto uh = std::span(u_hat_).subspan(b * pred, pred);
      transform_.forward(u, uh);
      nn::dynamic_routing(uh, geom_.n_primary, geom_.classes, cfg_.class_dim, cfg_.routing_iters,
                          out.capsules.values().subspan(b * caps, caps), &traces_[b]);
      for (std::size_t j = 0; j < geom_.classes; ++j) {
        double q = 0.0;
        for (std::size_t e = 0; e < cfg_.class_dim; ++e) {
          double const v = out.capsules[b * caps + j * cfg_.class_dim + e];
          q += v * v;
        }
        out.norms[b * geom_.classes + j] = std::sqrt(q);
      }
    }

    masked_ = Tensor({batch, caps});
    mask_.resize(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      int target = mask.empty() ? argmax(out.norms.values().subspan(b * geom_.classes, geom_.classes)) : mask[b];
      if (target < 0 || static_cast<std::size_t>(target) >= geom_.classes) throw DomainError("class label out of range");
      mask_[b] = static_cast<std::size_t>(target);
      for (std::size_t e = 0; e < cfg_.class_dim; ++e) {
        std::size_t const at = b * caps + mask_[b] * cfg_.class_dim + e;
        masked_[at] = out.capsules[at];
      }
    }
    hidden_.clear();
    Tensor h = masked_;
    for (std::size_t i = 0; i + 1 < decoder_.size(); ++i) {
      h = nn::relu(decoder_[i].forward(h));
      hidden_.push_back(h);
    }
    recon_ = nn::sigmoid(decoder_.back().forward(h));
    out.reconstruction = recon_.reshaped(x.shape());
    return out;
  }

  /// Batch-mean loss without touching gradients.
  LossParts loss(Tensor const& x, std::span<int const> y) {
    auto out = forward(x, y);
    return batch_loss(x, y, out, nullptr, nullptr);
  }

  /// Batch-mean loss; accumulates gradients into every parameter (zeroed first).
  LossParts loss_and_grad(Tensor const& x, std::span<int const> y, Rng& /*unused: no stochastic layers*/) {
    auto out = forward(x, y);
    std::size_t const batch = out.norms.dim(0);
    std::size_t const caps = geom_.classes * cfg_.class_dim;
    Tensor dnorm(out.norms.shape());
    Tensor drecon(recon_.shape());
    auto parts = batch_loss(x, y, out, &dnorm, &drecon);
    zero_grads(parameters());

    Tensor g = nn::sigmoid_backward(recon_, std::move(drecon));
    for (std::size_t i = decoder_.size(); i-- > 0;) {
      g = decoder_[i].backward(g, true);
      if (i > 0) g = nn::relu_backward(hidden_[i - 1], std::move(g));
    }
    // g is now the gradient w.r.t. the masked capsule input.
    Tensor dcaps({batch, geom_.classes, cfg_.class_dim});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < geom_.classes; ++j) {
        double const n = out.norms[b * geom_.classes + j];
        double const scale = n > 0.0 ? dnorm[b * geom_.classes + j] / n : 0.0;
        for (std::size_t e = 0; e < cfg_.class_dim; ++e) {
          std::size_t const at = b * caps + j * cfg_.class_dim + e;
          dcaps[at] = scale * out.capsules[at] + (j == mask_[b] ? g[at] : 0.0);
        }
      }
    }

    std::size_t const pred = transform_.prediction_size();
    std::vector<double> du_hat(pred);
    Tensor dprimary(primary_pre_.shape());
    std::vector<double> du(primary_size());
    for (std::size_t b = 0; b < batch; ++b) {
      auto uh = std::span<double const>(u_hat_).subspan(b * pred, pred);
      nn::dynamic_routing_backward(uh, traces_[b], dcaps.values().subspan(b * caps, caps), du_hat);
      auto u = primary_out_.values().subspan(b * primary_size(), primary_size());
      transform_.backward(u, du_hat, du);
      for (std::size_t c = 0; c < geom_.n_primary; ++c) {
        std::size_t const at = b * primary_size() + c * cfg_.primary_dim;
        nn::squash_backward(primary_pre_.values().subspan(at, cfg_.primary_dim),
                            std::span<double const>(du).subspan(c * cfg_.primary_dim, cfg_.primary_dim),
                            dprimary.values().subspan(at, cfg_.primary_dim));
      }
    }
    Tensor da1 = nn::relu_backward(a1_, primary_.backward(dprimary, true));
    conv_.backward(da1, false);
    return parts;
  }

  std::vector<int> predict(Tensor const& x) {
    auto out = forward(x);
    std::vector<int> y(out.norms.dim(0));
    for (std::size_t b = 0; b < y.size(); ++b) {
      y[b] = argmax(out.norms.values().subspan(b * geom_.classes, geom_.classes));
    }
    return y;
  }

  /// Squashed primary capsules before any routing, one flattened row per sample.
  Tensor primary_capsules(Tensor const& x) {
    forward(x);
    return primary_out_.reshaped({primary_out_.dim(0), primary_size()});
  }

 private:
  std::size_t check_input(Tensor const& x) const {
    bool const ok = x.rank() == 4 && x.dim(1) == geom_.w && x.dim(2) == geom_.k && x.dim(3) == geom_.channels;
    if (!ok) {
      throw ShapeError("capsule network built for batch x " + std::to_string(geom_.w) + "x" + std::to_string(geom_.k) +
                       "x" + std::to_string(geom_.channels) + ", got " + to_string(x.shape()));
    }
    return x.dim(0);
  }

  LossParts batch_loss(Tensor const& x, std::span<int const> y, Output const& out, Tensor* dnorm, Tensor* drecon) const {
    std::size_t const batch = out.norms.dim(0);
    if (y.size() != batch) throw ShapeError("label count does not match batch size");
    std::size_t const n = geom_.input_size();
    double const inv = 1.0 / static_cast<double>(batch);
    LossParts parts;
    for (std::size_t b = 0; b < batch; ++b) {
      auto norms = out.norms.values().subspan(b * geom_.classes, geom_.classes);
      std::span<double> gn = dnorm ? dnorm->values().subspan(b * geom_.classes, geom_.classes) : std::span<double>{};
      auto const target = static_cast<std::size_t>(y[b]);
      double const cls = cfg_.loss_mode == LossMode::Margin ? nn::margin_loss(norms, target, cfg_.margin, gn)
                                                            : nn::binary_margin_loss(norms, target, gn);
      std::span<double> gr = drecon ? drecon->values().subspan(b * n, n) : std::span<double>{};
      double const mse = nn::reconstruction_loss(recon_.values().subspan(b * n, n), x.values().subspan(b * n, n), gr);
      parts.classification += cls * inv;
      parts.reconstruction += mse * inv;
      for (double& v : gn) v *= inv;
      for (double& v : gr) v *= cfg_.alpha * inv;
    }
    parts.total = nn::total_loss(parts.classification, parts.reconstruction, cfg_.alpha);
    return parts;
  }

  CapsNetConfig cfg_;
  CapsNetGeometry geom_;
  nn::Conv2d conv_;
  nn::Conv2d primary_;
  nn::CapsuleTransform transform_;
  std::vector<nn::Dense> decoder_;

  // Forward caches consumed by backward.
  Tensor a1_, primary_pre_, primary_out_, masked_, recon_;
  std::vector<Tensor> hidden_;
  std::vector<double> u_hat_;
  std::vector<nn::RoutingTrace> traces_;
  std::vector<std::size_t> mask_;
};

inline CapsNet build_capsnet(std::size_t w, std::size_t k, std::size_t channels, std::size_t classes,
                             CapsNetConfig const& cfg = {}, std::uint64_t seed = 0) {
  CapsNet net(w, k, channels, classes, cfg);
  net.init(seed);
  return net;
}

/// One line per parameter array: name, shape, count; then the total.
template <typename Model>
std::string describe_parameters(Model& model) {
  std::ostringstream os;
  std::size_t total = 0;
  for (auto const* p : model.parameters()) {
    os << p->name << ' ' << to_string(p->value.shape()) << ' ' << p->value.size() << '\n';
    total += p->value.size();
  }
  os << "total " << total << '\n';
  return os.str();
}

}  // namespace graphcaps::models
