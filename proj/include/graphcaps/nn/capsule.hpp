#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "graphcaps/nn/parameter.hpp"

namespace graphcaps::nn {

/// Stabilizer inside the norm used by squash: |s| is taken as sqrt(|s|^2 + eps).
inline constexpr double kSquashEpsilon = 1e-9;

namespace detail {

inline double squared_norm(std::span<double const> s) {
  double q = 0.0;
  for (double x : s) q += x * x;
  return q;
}

// squash(s) = g(|s|^2) * s with g(q) = q / ((1 + q) * sqrt(q + eps)).
inline double squash_gain(double q) { return q / ((1.0 + q) * std::sqrt(q + kSquashEpsilon)); }

inline double squash_gain_derivative(double q) {
  double const r = std::sqrt(q + kSquashEpsilon);
  double const a = 1.0 + q;
  return (a * r - q * (r + a / (2.0 * r))) / (a * a * (q + kSquashEpsilon));
}

}  // namespace detail

inline void squash(std::span<double const> s, std::span<double> v) {
  double const g = detail::squash_gain(detail::squared_norm(s));
  for (std::size_t i = 0; i < s.size(); ++i) v[i] = g * s[i];
}

inline std::vector<double> squash(std::span<double const> s) {
  std::vector<double> v(s.size());
  squash(s, v);
  return v;
}

/// ds = J^T dv where J is the (symmetric) Jacobian of squash at s.
inline void squash_backward(std::span<double const> s, std::span<double const> dv, std::span<double> ds) {
  double const q = detail::squared_norm(s);
  double const g = detail::squash_gain(q);
  double const gp = detail::squash_gain_derivative(q);
  double dot = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) dot += s[i] * dv[i];
  for (std::size_t i = 0; i < s.size(); ++i) ds[i] = g * dv[i] + 2.0 * gp * dot * s[i];
#ifdef GRAPHCAPS_FAULT_SQUASH_GRADIENT
  // Deliberately wrong derivative; only the fault-injection build defines this.
  for (std::size_t i = 0; i < s.size(); ++i) ds[i] *= 1.05;
#endif
}

/// Everything the backward pass of routing needs, per iteration.
struct RoutingTrace {
  std::size_t n_in = 0, n_out = 0, dim = 0, iterations = 0;
  std::vector<double> coupling;  // iterations x n_in x n_out
  std::vector<double> pre;       // iterations x n_out x dim (s before squash)
  std::vector<double> post;      // iterations x n_out x dim (v after squash)

  std::span<double const> coupling_at(std::size_t t) const {
    return std::span(coupling).subspan(t * n_in * n_out, n_in * n_out);
  }
};

/// Routing-by-agreement on predictions laid out n_in x n_out x dim.
///
/// Logits start at zero; each iteration takes a softmax over output capsules,
/// forms weighted sums, squashes them, and (except after the last iteration)
/// adds the agreement u_hat . v to the logits. Writes n_out x dim to `v_out`.
inline void dynamic_routing(std::span<double const> u_hat, std::size_t n_in, std::size_t n_out, std::size_t dim,
                            std::size_t iterations, std::span<double> v_out, RoutingTrace* trace = nullptr) {
  if (iterations < 1) throw DomainError("routing needs at least one iteration");
  if (u_hat.size() != n_in * n_out * dim) throw ShapeError("routing input size does not match n_in x n_out x dim");
  std::vector<double> logits(n_in * n_out, 0.0);
  std::vector<double> c(n_in * n_out);
  std::vector<double> s(n_out * dim);
  std::vector<double> v(n_out * dim);
  if (trace) {
    *trace = RoutingTrace{n_in, n_out, dim, iterations, {}, {}, {}};
    trace->coupling.reserve(iterations * n_in * n_out);
    trace->pre.reserve(iterations * n_out * dim);
    trace->post.reserve(iterations * n_out * dim);
  }
  for (std::size_t t = 0; t < iterations; ++t) {
    for (std::size_t i = 0; i < n_in; ++i) {
      double const* b = &logits[i * n_out];
      double* ci = &c[i * n_out];
      double const top = *std::max_element(b, b + n_out);
      double z = 0.0;
      for (std::size_t j = 0; j < n_out; ++j) z += ci[j] = std::exp(b[j] - top);
      for (std::size_t j = 0; j < n_out; ++j) ci[j] /= z;
    }
    std::fill(s.begin(), s.end(), 0.0);
    for (std::size_t i = 0; i < n_in; ++i) {
      for (std::size_t j = 0; j < n_out; ++j) {
        double const w = c[i * n_out + j];
        double const* u = &u_hat[(i * n_out + j) * dim];
        double* sj = &s[j * dim];
        for (std::size_t e = 0; e < dim; ++e) sj[e] += w * u[e];
      }
    }
    for (std::size_t j = 0; j < n_out; ++j) {
      squash(std::span(s).subspan(j * dim, dim), std::span(v).subspan(j * dim, dim));
    }
    if (trace) {
      trace->coupling.insert(trace->coupling.end(), c.begin(), c.end());
      trace->pre.insert(trace->pre.end(), s.begin(), s.end());
      trace->post.insert(trace->post.end(), v.begin(), v.end());
    }
    if (t + 1 == iterations) break;
    for (std::size_t i = 0; i < n_in; ++i) {
      for (std::size_t j = 0; j < n_out; ++j) {
        double const* u = &u_hat[(i * n_out + j) * dim];
        double const* vj = &v[j * dim];
        double a = 0.0;
        for (std::size_t e = 0; e < dim; ++e) a += u[e] * vj[e];
        logits[i * n_out + j] += a;
      }
    }
  }
  std::copy(v.begin(), v.end(), v_out.begin());
}

inline Tensor dynamic_routing(Tensor const& u_hat, std::size_t iterations, RoutingTrace* trace = nullptr) {
  if (u_hat.rank() != 3) throw ShapeError("routing predictions must be n_in x n_out x dim, got " + to_string(u_hat.shape()));
  Tensor v({u_hat.dim(1), u_hat.dim(2)});
  dynamic_routing(u_hat.values(), u_hat.dim(0), u_hat.dim(1), u_hat.dim(2), iterations, v.values(), trace);
  return v;
}

/// Gradient of the routed output with respect to the predictions, through every iteration.
inline void dynamic_routing_backward(std::span<double const> u_hat, RoutingTrace const& tr,
                                     std::span<double const> dv_out, std::span<double> du_hat) {
  std::size_t const n_in = tr.n_in, n_out = tr.n_out, dim = tr.dim;
  std::fill(du_hat.begin(), du_hat.end(), 0.0);
  std::vector<double> db(n_in * n_out, 0.0);  // gradient w.r.t. the logits of iteration t + 1
  std::vector<double> dv(dv_out.begin(), dv_out.end());
  std::vector<double> ds(n_out * dim);
  std::vector<double> dc(n_out);
  for (std::size_t t = tr.iterations; t-- > 0;) {
    double const* v = &tr.post[t * n_out * dim];
    double const* s = &tr.pre[t * n_out * dim];
    auto const c = tr.coupling_at(t);
    bool const last = t + 1 == tr.iterations;
    if (!last) {
      std::fill(dv.begin(), dv.end(), 0.0);
      for (std::size_t i = 0; i < n_in; ++i) {
        for (std::size_t j = 0; j < n_out; ++j) {
          double const g = db[i * n_out + j];
          double const* u = &u_hat[(i * n_out + j) * dim];
          double* du = &du_hat[(i * n_out + j) * dim];
          for (std::size_t e = 0; e < dim; ++e) {
            dv[j * dim + e] += g * u[e];
            du[e] += g * v[j * dim + e];
          }
        }
      }
    }
    for (std::size_t j = 0; j < n_out; ++j) {
      squash_backward(std::span(s + j * dim, dim), std::span(dv).subspan(j * dim, dim),
                      std::span(ds).subspan(j * dim, dim));
    }
    for (std::size_t i = 0; i < n_in; ++i) {
      double weighted = 0.0;
      for (std::size_t j = 0; j < n_out; ++j) {
        double const cij = c[i * n_out + j];
        double const* u = &u_hat[(i * n_out + j) * dim];
        double* du = &du_hat[(i * n_out + j) * dim];
        double a = 0.0;
        for (std::size_t e = 0; e < dim; ++e) {
          du[e] += cij * ds[j * dim + e];
          a += u[e] * ds[j * dim + e];
        }
        dc[j] = a;
        weighted += cij * a;
      }
      // Logits of iteration t feed both the softmax and, unchanged, iteration t + 1.
      for (std::size_t j = 0; j < n_out; ++j) {
        double const carried = last ? 0.0 : db[i * n_out + j];
        db[i * n_out + j] = carried + c[i * n_out + j] * (dc[j] - weighted);
      }
    }
  }
}

inline Tensor dynamic_routing_backward(Tensor const& u_hat, RoutingTrace const& trace, Tensor const& dv) {
  Tensor du(u_hat.shape());
  dynamic_routing_backward(u_hat.values(), trace, dv.values(), du.values());
  return du;
}

/// Per-pair linear maps from lower capsules (dim d_in) to predictions for
/// every upper capsule (dim d_out). Weight layout n_in x n_out x d_out x d_in.
class CapsuleTransform {
 public:
  CapsuleTransform() = default;
  CapsuleTransform(std::string const& name, std::size_t n_in, std::size_t d_in, std::size_t n_out, std::size_t d_out)
      : weight(name + ".weight", {n_in, n_out, d_out, d_in}), n_in_(n_in), d_in_(d_in), n_out_(n_out), d_out_(d_out) {}

  void init(double stddev, Rng& rng) { normal_init(weight.value, stddev, rng); }

  std::size_t prediction_size() const { return n_in_ * n_out_ * d_out_; }

  /// u: n_in x d_in for one sample; writes n_in x n_out x d_out.
  void forward(std::span<double const> u, std::span<double> u_hat) const {
    double const* w = weight.value.data();
    for (std::size_t i = 0; i < n_in_; ++i) {
      double const* ui = &u[i * d_in_];
      for (std::size_t j = 0; j < n_out_; ++j) {
        double* out = &u_hat[(i * n_out_ + j) * d_out_];
        double const* wij = w + (i * n_out_ + j) * d_out_ * d_in_;
        for (std::size_t r = 0; r < d_out_; ++r) {
          double a = 0.0;
          for (std::size_t q = 0; q < d_in_; ++q) a += wij[r * d_in_ + q] * ui[q];
          out[r] = a;
        }
      }
    }
  }

  /// Accumulates the weight gradient and writes du (n_in x d_in).
  void backward(std::span<double const> u, std::span<double const> du_hat, std::span<double> du) {
    double const* w = weight.value.data();
    double* gw = weight.grad.data();
    std::fill(du.begin(), du.end(), 0.0);
    for (std::size_t i = 0; i < n_in_; ++i) {
      double const* ui = &u[i * d_in_];
      double* dui = &du[i * d_in_];
      for (std::size_t j = 0; j < n_out_; ++j) {
        double const* g = &du_hat[(i * n_out_ + j) * d_out_];
        std::size_t const base = (i * n_out_ + j) * d_out_ * d_in_;
        for (std::size_t r = 0; r < d_out_; ++r) {
          for (std::size_t q = 0; q < d_in_; ++q) {
            gw[base + r * d_in_ + q] += g[r] * ui[q];
            dui[q] += w[base + r * d_in_ + q] * g[r];
          }
        }
      }
    }
  }

  Parameter weight;

 private:
  std::size_t n_in_ = 0, d_in_ = 0, n_out_ = 0, d_out_ = 0;
};

}  // namespace graphcaps::nn
