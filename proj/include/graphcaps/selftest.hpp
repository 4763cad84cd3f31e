#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <queue>
#include <string>
#include <vector>

#include "graphcaps/labelling.hpp"
#include "graphcaps/models/capsnet.hpp"
#include "graphcaps/nn/grad_check.hpp"
#include "graphcaps/nn/loss.hpp"
#include "graphcaps/tensorizer.hpp"

namespace graphcaps::selftest {

// Built-in consistency suites for `graphcaps selftest`. Each suite checks a
// kernel against a second, independent formulation, so a broken kernel shows
// up on a fresh build without any data files.

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline Graph random_connected_graph(int n, double extra_p, int d, Rng& rng) {
  std::vector<Edge> edges;
  for (int v = 1; v < n; ++v) edges.emplace_back(static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(v))), v);
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (uniform01(rng) < extra_p) edges.emplace_back(u, v);
    }
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(d)));
  return Graph(n, edges, labels);
}

inline Graph random_graph(int n, double p, int d, Rng& rng) {
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (uniform01(rng) < p) edges.emplace_back(u, v);
    }
  }
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& l : labels) l = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(d)));
  return Graph(n, edges, labels);
}

/// Betweenness from pairwise distances and shortest-path counts:
/// v lies on sigma(s,v) * sigma(v,t) shortest s-t paths when d(s,v) + d(v,t) = d(s,t).
inline std::vector<double> betweenness_by_path_counts(Graph const& g) {
  auto const n = static_cast<std::size_t>(g.size());
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
  std::vector<std::vector<double>> sigma(n, std::vector<double>(n, 0.0));
  for (std::size_t s = 0; s < n; ++s) {
    std::queue<int> q;
    dist[s][s] = 0;
    sigma[s][s] = 1.0;
    q.push(static_cast<int>(s));
    while (!q.empty()) {
      int const u = q.front();
      q.pop();
      for (int w : g.neighbours(u)) {
        auto const wi = static_cast<std::size_t>(w);
        auto const ui = static_cast<std::size_t>(u);
        if (dist[s][wi] < 0) {
          dist[s][wi] = dist[s][ui] + 1;
          q.push(w);
        }
        if (dist[s][wi] == dist[s][ui] + 1) sigma[s][wi] += sigma[s][ui];
      }
    }
  }
  std::vector<double> bc(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t t = s + 1; t < n; ++t) {
        if (s == v || t == v || dist[s][t] < 0 || dist[s][v] < 0 || dist[v][t] < 0) continue;
        if (dist[s][v] + dist[v][t] == dist[s][t]) bc[v] += sigma[s][v] * sigma[v][t] / sigma[s][t];
      }
    }
  }
  return bc;
}

/// Smallest upper-triangle adjacency mask over all numberings (n <= 8).
inline std::uint32_t min_adjacency_mask(Graph const& g) {
  int const n = g.size();
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::uint32_t best = ~0u;
  auto const edges = g.edges();
  do {
    std::uint32_t mask = 0;
    for (auto [u, v] : edges) {
      int a = perm[static_cast<std::size_t>(u)], b = perm[static_cast<std::size_t>(v)];
      if (a > b) std::swap(a, b);
      mask |= 1u << (a * n + b);
    }
    best = std::min(best, mask);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline std::string fmt(char const* f, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

}  // namespace detail

/// 200 random connected graphs on <= 8 nodes against the path-count formula.
inline SuiteResult betweenness_suite() {
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    auto const g = detail::random_connected_graph(2 + static_cast<int>(uniform_below(rng, 7)), 0.3, 2, rng);
    auto const fast = betweenness_centrality(g);
    auto const slow = detail::betweenness_by_path_counts(g);
    for (std::size_t v = 0; v < fast.size(); ++v) worst = std::max(worst, std::abs(fast[v] - slow[v]));
  }
  return {"betweenness-oracle", worst <= 1e-9, detail::fmt("200 graphs, max abs error %.3g", worst)};
}

/// Every 4-node graph under all 24 numberings: certificates agree exactly
/// within isomorphism classes and differ across them.
inline SuiteResult canonical_suite() {
  std::vector<Edge> const all_edges{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  std::vector<std::pair<std::uint32_t, Certificate>> seen;
  std::size_t bad = 0;
  for (unsigned bits = 0; bits < 64; ++bits) {
    std::vector<Edge> edges;
    for (std::size_t e = 0; e < 6; ++e) {
      if (bits & (1u << e)) edges.push_back(all_edges[e]);
    }
    Graph const g(4, edges, {0, 0, 0, 0});
    auto const cert = canonical_form(g).certificate;
    std::vector<int> perm{0, 1, 2, 3};
    do {
      bad += !(canonical_form(g.relabelled(perm)).certificate == cert);
    } while (std::next_permutation(perm.begin(), perm.end()));
    auto const cls = detail::min_adjacency_mask(g);
    for (auto const& [other_cls, other_cert] : seen) bad += (other_cls == cls) != (other_cert == cert);
    seen.emplace_back(cls, cert);
  }
  return {"canonical-oracle", bad == 0, "64 graphs x 24 numberings, " + std::to_string(bad) + " mismatches"};
}

/// Random labelled graphs under random permutations give bitwise-identical
/// tensors with both labelling procedures.
inline SuiteResult invariance_suite(int graphs = 100, int permutations = 5) {
  Rng rng(77);
  std::size_t bad = 0;
  for (int i = 0; i < graphs; ++i) {
    int const n = 1 + static_cast<int>(uniform_below(rng, 20));
    int const d = 1 + static_cast<int>(uniform_below(rng, 5));
    auto const g = detail::random_graph(n, 0.25, d, rng);
    for (auto proc : {LabellingProcedure::Canonical, LabellingProcedure::BetweennessCentrality}) {
      TensorizerOptions opts;
      opts.width = 8;
      opts.field_size = 5;
      opts.procedure = proc;
      auto const ref = graph_to_tensor(g, d, opts);
      for (int p = 0; p < permutations; ++p) {
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        shuffle(std::span<int>(perm), rng);
        bad += !(graph_to_tensor(g.relabelled(perm), d, opts).data == ref.data);
      }
    }
  }
  return {"permutation-invariance", bad == 0,
          std::to_string(graphs) + " graphs x " + std::to_string(permutations) + " permutations x 2 procedures, " +
              std::to_string(bad) + " mismatches"};
}

/// End-to-end capsule network gradients against central differences.
inline SuiteResult gradient_suite() {
  double worst = 0.0;
  for (auto mode : {models::LossMode::BinaryCrossEntropy, models::LossMode::Margin}) {
    models::CapsNetConfig c;
    c.conv_filters = 4;
    c.conv_kernel = 2;
    c.primary_channels = 2;
    c.primary_dim = 4;
    c.primary_kernel = 2;
    c.primary_stride = 1;
    c.class_dim = 4;
    c.decoder_hidden = {8};
    c.loss_mode = mode;
    models::CapsNet net(4, 3, 3, 2, c);
    net.init(5);
    Rng rng(5);
    Tensor x({3, 4, 3, 3});
    for (std::size_t f = 0; f < 3 * 4 * 3; ++f) x[f * 3 + uniform_below(rng, 3)] = 1.0;
    std::vector<int> y{1, 0, 1};
    auto params = net.parameters();
    auto r = nn::grad_check(params, [&] {
      Rng unused(0);
      return net.loss_and_grad(x, y, unused).total;
    });
    worst = std::max(worst, r.max_relative_error);
  }
  return {"capsnet-gradients", worst < 1e-4, detail::fmt("both loss modes, max relative error %.3g", worst)};
}

/// Coupling coefficients sum to one per input capsule for 1 to 5 iterations,
/// and the margin loss reproduces hand-computed values.
inline SuiteResult routing_and_loss_suite() {
  Rng rng(31);
  double worst = 0.0;
  for (std::size_t iters = 1; iters <= 5; ++iters) {
    Tensor u({6, 3, 4});
    for (double& v : u.values()) v = standard_normal(rng);
    nn::RoutingTrace trace;
    nn::dynamic_routing(u, iters, &trace);
    for (std::size_t t = 0; t < iters; ++t) {
      auto const c = trace.coupling_at(t);
      for (std::size_t i = 0; i < 6; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 3; ++j) s += c[i * 3 + j];
        worst = std::max(worst, std::abs(s - 1.0));
      }
    }
  }
  std::vector<double> const ok{0.95, 0.05}, bad{0.0, 1.0};
  double const l0 = nn::margin_loss(ok, 0);
  double const l1 = nn::margin_loss(bad, 0);
  bool const loss_ok = l0 == 0.0 && std::abs(l1 - (0.81 + 0.5 * 0.81)) < 1e-15;
  return {"routing-and-loss", worst <= 1e-9 && loss_ok,
          detail::fmt("max coupling row error %.3g, margin loss %.17g", worst, l1)};
}

inline std::vector<std::function<SuiteResult()>> default_suites() {
  return {betweenness_suite, canonical_suite, [] { return invariance_suite(); }, gradient_suite,
          routing_and_loss_suite};
}

/// Runs every suite, printing one timed line each. \returns true if all pass.
inline bool run_all(std::ostream& os, std::vector<std::function<SuiteResult()>> const& suites = default_suites()) {
  bool all = true;
  for (auto const& suite : suites) {
    auto const start = std::chrono::steady_clock::now();
    SuiteResult r;
    try {
      r = suite();
    } catch (std::exception const& e) {
      r.name = r.name.empty() ? "suite" : r.name;
      r.passed = false;
      r.detail = std::string("threw: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%7.3f s", r.seconds);
    os << (r.passed ? "PASS  " : "FAIL  ") << r.name << "  " << buf << "  " << r.detail << '\n';
    all = all && r.passed;
  }
  os << (all ? "selftest passed\n" : "selftest FAILED\n");
  return all;
}

}  // namespace graphcaps::selftest
