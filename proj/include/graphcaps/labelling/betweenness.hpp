#pragma once

#include <vector>

#include "graphcaps/graph.hpp"

namespace graphcaps {

/// Unnormalized betweenness centrality (Brandes' accumulation, unweighted).
///
/// score[v] sums, over unordered pairs {s, t} with s != v != t, the fraction
/// of shortest s-t paths through v. Runs in O(n m).
inline std::vector<double> betweenness_centrality(Graph const& g) {
  auto const n = static_cast<std::size_t>(g.size());
  std::vector<double> score(n, 0.0);
  std::vector<int> dist(n);
  std::vector<double> sigma(n);
  std::vector<double> delta(n);
  std::vector<int> order;
  order.reserve(n);
  std::vector<int> queue(n);

  for (std::size_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    order.clear();

    dist[s] = 0;
    sigma[s] = 1.0;
    std::size_t head = 0, tail = 0;
    queue[tail++] = static_cast<int>(s);
    while (head < tail) {
      int const v = queue[head++];
      order.push_back(v);
      for (int w : g.neighbours(v)) {
        auto const wi = static_cast<std::size_t>(w);
        auto const vi = static_cast<std::size_t>(v);
        if (dist[wi] < 0) {
          dist[wi] = dist[vi] + 1;
          queue[tail++] = w;
        }
        if (dist[wi] == dist[vi] + 1) sigma[wi] += sigma[vi];
      }
    }
    // Predecessors are recovered from distances instead of being stored.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      auto const w = static_cast<std::size_t>(*it);
      for (int v : g.neighbours(*it)) {
        auto const vi = static_cast<std::size_t>(v);
        if (dist[vi] == dist[w] - 1) delta[vi] += sigma[vi] / sigma[w] * (1.0 + delta[w]);
      }
      if (w != s) score[w] += delta[w];
    }
  }
  // Each unordered pair was visited from both endpoints.
  for (auto& x : score) x *= 0.5;
  return score;
}

}  // namespace graphcaps
