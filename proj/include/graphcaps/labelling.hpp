#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "graphcaps/error.hpp"
#include "graphcaps/graph.hpp"
#include "graphcaps/labelling/betweenness.hpp"
#include "graphcaps/labelling/canonical.hpp"
#include "graphcaps/labelling/wl.hpp"

namespace graphcaps {

enum class LabellingProcedure { BetweennessCentrality, Canonical };

inline std::string_view to_string(LabellingProcedure p) {
  return p == LabellingProcedure::BetweennessCentrality ? "bc" : "canonical";
}

/// Accepts "bc" and "canonical" (alias "nauty").
inline LabellingProcedure parse_labelling(std::string_view s) {
  if (s == "bc" || s == "betweenness") return LabellingProcedure::BetweennessCentrality;
  if (s == "canonical" || s == "nauty") return LabellingProcedure::Canonical;
  throw DomainError("unknown labelling procedure '" + std::string(s) + "'");
}

/// How equal selection scores are ordered.
enum class TieBreak {
  /// WL colour, then canonical position: isomorphism-consistent.
  Consistent,
  /// Node index: depends on the input numbering.
  NodeIndex,
};

struct NodeRanking {
  /// Permutation of node ids, most important first.
  std::vector<int> order;
  /// Betweenness scores, or canonical positions for the canonical procedure.
  std::vector<double> scores;
  LabellingProcedure procedure = LabellingProcedure::Canonical;
};

/// Per-graph keys shared by node selection and receptive-field normalization.
struct NodeKeys {
  std::vector<int> wl_colors;
  std::vector<int> canonical_position;
};

inline NodeKeys compute_node_keys(Graph const& g, int max_nodes = kDefaultCanonicalNodeLimit) {
  return {wl_refine(g).colors, canonical_form(g, max_nodes).position};
}

inline NodeRanking canonical_order(Graph const& g, int max_nodes = kDefaultCanonicalNodeLimit) {
  auto form = canonical_form(g, max_nodes);
  NodeRanking r;
  r.procedure = LabellingProcedure::Canonical;
  r.order = std::move(form.order);
  r.scores.assign(form.position.begin(), form.position.end());
  return r;
}

namespace detail {

/// Groups scores into tiers that absorb floating-point noise between
/// isomorphic nodes (summation order differs under relabelling).
inline std::vector<int> score_tiers(std::vector<double> const& scores) {
  auto const n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<int> tier(n, 0);
  int t = 0;
  for (std::size_t r = 1; r < n; ++r) {
    double const prev = scores[idx[r - 1]];
    double const cur = scores[idx[r]];
    if (prev - cur > 1e-9 * std::max(1.0, std::abs(prev))) ++t;
    tier[idx[r]] = t;
  }
  return tier;
}

}  // namespace detail

/// Node selection order for a labelling procedure.
inline NodeRanking rank_nodes(Graph const& g, LabellingProcedure procedure, NodeKeys const& keys,
                              TieBreak ties = TieBreak::Consistent) {
  if (procedure == LabellingProcedure::Canonical) {
    NodeRanking r;
    r.procedure = procedure;
    r.order.resize(keys.canonical_position.size());
    for (std::size_t v = 0; v < r.order.size(); ++v) {
      r.order[static_cast<std::size_t>(keys.canonical_position[v])] = static_cast<int>(v);
    }
    r.scores.assign(keys.canonical_position.begin(), keys.canonical_position.end());
    return r;
  }

  NodeRanking r;
  r.procedure = procedure;
  r.scores = betweenness_centrality(g);
  r.order.resize(r.scores.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  auto const& s = r.scores;
  if (ties == TieBreak::NodeIndex) {
    std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) {
      return s[static_cast<std::size_t>(a)] > s[static_cast<std::size_t>(b)];
    });
    return r;
  }
  auto const tier = detail::score_tiers(s);
  auto const& wl = keys.wl_colors;
  auto const& pos = keys.canonical_position;
  std::sort(r.order.begin(), r.order.end(), [&](int a, int b) {
    auto const ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
    if (tier[ia] != tier[ib]) return tier[ia] < tier[ib];
    if (wl[ia] != wl[ib]) return wl[ia] < wl[ib];
    return pos[ia] < pos[ib];
  });
  return r;
}

inline NodeRanking rank_nodes(Graph const& g, LabellingProcedure procedure,
                              TieBreak ties = TieBreak::Consistent) {
  return rank_nodes(g, procedure, compute_node_keys(g), ties);
}

}  // namespace graphcaps
