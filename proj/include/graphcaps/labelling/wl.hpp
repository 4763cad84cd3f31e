#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "graphcaps/graph.hpp"

namespace graphcaps {

/// Node colouring produced by Weisfeiler-Lehman refinement.
struct WLColoring {
  std::vector<int> colors;
  /// Refinement rounds actually applied.
  int rounds = 0;

  int num_colors() const {
    return colors.empty() ? 0 : *std::max_element(colors.begin(), colors.end()) + 1;
  }
};

namespace detail {

/// Replaces arbitrary integer keys by their rank among the distinct keys.
inline std::vector<int> dense_ranks(std::span<int const> keys) {
  std::vector<int> sorted(keys.begin(), keys.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<int> out(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    out[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), keys[i]) - sorted.begin());
  }
  return out;
}

/// One refinement step. New ids are the lexicographic ranks of
/// (colour, sorted neighbour colours), so they never depend on node numbering
/// and never merge two previously distinct colours.
inline std::vector<int> wl_step(Graph const& g, std::span<int const> colors) {
  auto const n = static_cast<std::size_t>(g.size());
  std::vector<std::vector<int>> signature(n);
  for (std::size_t v = 0; v < n; ++v) {
    auto& sig = signature[v];
    auto const& nbrs = g.neighbours(static_cast<int>(v));
    sig.reserve(nbrs.size() + 1);
    sig.push_back(colors[v]);
    for (int u : nbrs) sig.push_back(colors[static_cast<std::size_t>(u)]);
    std::sort(sig.begin() + 1, sig.end());
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return signature[a] < signature[b]; });
  std::vector<int> out(n);
  int next = -1;
  for (std::size_t r = 0; r < n; ++r) {
    if (r == 0 || signature[idx[r]] != signature[idx[r - 1]]) ++next;
    out[idx[r]] = next;
  }
  return out;
}

inline int count_colors(std::span<int const> colors) {
  return colors.empty() ? 0 : *std::max_element(colors.begin(), colors.end()) + 1;
}

}  // namespace detail

/// Iterated colour refinement starting from `init`, stopping when the
/// partition is stable or after `max_rounds` rounds.
inline WLColoring wl_refine(Graph const& g, std::span<int const> init, int max_rounds) {
  if (max_rounds < 0) throw DomainError("wl_refine: rounds must be non-negative");
  if (init.size() != static_cast<std::size_t>(g.size())) {
    throw DomainError("wl_refine: initial colouring has wrong length");
  }
  WLColoring result{detail::dense_ranks(init), 0};
  int classes = detail::count_colors(result.colors);
  while (result.rounds < max_rounds) {
    auto next = detail::wl_step(g, result.colors);
    int const next_classes = detail::count_colors(next);
    if (next_classes == classes) break;
    result.colors = std::move(next);
    classes = next_classes;
    ++result.rounds;
  }
  return result;
}

/// Stable refinement of the node labels.
inline WLColoring wl_refine(Graph const& g) {
  return wl_refine(g, g.node_labels(), g.size());
}

}  // namespace graphcaps
