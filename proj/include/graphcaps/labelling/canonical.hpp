#pragma once

#include <algorithm>
#include <compare>
#include <numeric>
#include <utility>
#include <vector>

#include "graphcaps/error.hpp"
#include "graphcaps/graph.hpp"
#include "graphcaps/labelling/wl.hpp"

namespace graphcaps {

inline constexpr int kDefaultCanonicalNodeLimit = 10'000;

/// Labelled graph rewritten in a particular node numbering. Two graphs are
/// isomorphic iff their canonical certificates are equal.
struct Certificate {
  std::vector<int> labels;
  /// Edges (i, j), i < j, in the new numbering, sorted.
  std::vector<Edge> edges;

  friend bool operator==(Certificate const&, Certificate const&) = default;

  /// Orders by upper-triangle adjacency bitstring, then label sequence. A
  /// lexicographically larger sorted edge list has its first 1-bit earlier,
  /// hence the smaller bitstring when both have the same number of edges.
  friend std::strong_ordering operator<=>(Certificate const& a, Certificate const& b) {
    if (a.edges.size() != b.edges.size()) return a.edges.size() <=> b.edges.size();
    if (auto c = b.edges <=> a.edges; c != 0) return c;
    return a.labels <=> b.labels;
  }
};

inline Certificate make_certificate(Graph const& g, std::vector<int> const& position) {
  Certificate cert;
  auto const n = static_cast<std::size_t>(g.size());
  cert.labels.assign(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    cert.labels[static_cast<std::size_t>(position[v])] = g.node_label(static_cast<int>(v));
  }
  cert.edges.reserve(g.num_edges());
  for (auto [u, v] : g.edges()) {
    int a = position[static_cast<std::size_t>(u)];
    int b = position[static_cast<std::size_t>(v)];
    cert.edges.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(cert.edges.begin(), cert.edges.end());
  return cert;
}

/// Canonical numbering of a labelled graph.
struct CanonicalForm {
  /// order[i] is the node placed at canonical position i.
  std::vector<int> order;
  /// position[v] is the canonical position of node v.
  std::vector<int> position;
  Certificate certificate;
};

namespace detail {

/// Refines a colouring to the coarsest equitable partition below it.
inline std::vector<int> refine_to_equitable(Graph const& g, std::vector<int> colors) {
  int classes = count_colors(colors);
  while (classes < g.size()) {
    auto next = wl_step(g, colors);
    int const next_classes = count_colors(next);
    if (next_classes == classes) break;
    colors = std::move(next);
    classes = next_classes;
  }
  return colors;
}

/// Individualization-refinement search tree with automorphism pruning.
///
/// Children of a node individualize each vertex of the first non-singleton
/// cell. Leaves are discrete partitions; the smallest leaf certificate wins.
/// Two leaves with equal certificates yield an automorphism, which is used
/// both to skip children in the same orbit and to jump back to the common
/// ancestor of the two leaves.
class CanonicalSearch {
 public:
  explicit CanonicalSearch(Graph const& g) : g_(g) {}

  CanonicalForm run() {
    auto root = refine_to_equitable(g_, dense_ranks(g_.node_labels()));
    explore(std::move(root), 0);
    CanonicalForm form;
    form.position = std::move(best_position_);
    form.order.assign(form.position.size(), 0);
    for (std::size_t v = 0; v < form.position.size(); ++v) {
      form.order[static_cast<std::size_t>(form.position[v])] = static_cast<int>(v);
    }
    form.certificate = std::move(best_);
    return form;
  }

 private:
  static constexpr int kContinue = 1 << 30;

  int explore(std::vector<int> colors, int depth) {
    if (count_colors(colors) == g_.size()) return visit_leaf(std::move(colors));

    auto const cell = target_cell(colors);
    std::vector<int> tried;
    for (int v : cell) {
      if (in_explored_orbit(v, tried)) continue;
      tried.push_back(v);
      path_.push_back(v);
      int const jump = explore(refine_to_equitable(g_, individualize(colors, v)), depth + 1);
      path_.pop_back();
      if (jump < depth) return jump;
    }
    return kContinue;
  }

  int visit_leaf(std::vector<int> position) {
    auto cert = make_certificate(g_, position);
    if (!have_leaf_) {
      have_leaf_ = true;
      first_ = cert;
      first_position_ = position;
      first_path_ = path_;
      best_ = std::move(cert);
      best_position_ = std::move(position);
      best_path_ = path_;
      return kContinue;
    }
    if (cert == best_) {
      record_automorphism(best_position_, position);
      return common_prefix(best_path_);
    }
    if (cert == first_) {
      record_automorphism(first_position_, position);
      return common_prefix(first_path_);
    }
    if (cert < best_) {
      best_ = std::move(cert);
      best_position_ = std::move(position);
      best_path_ = path_;
    }
    return kContinue;
  }

  std::vector<int> target_cell(std::vector<int> const& colors) const {
    auto const n = colors.size();
    std::vector<int> cell_size(n, 0);
    for (int c : colors) ++cell_size[static_cast<std::size_t>(c)];
    int target = 0;
    while (cell_size[static_cast<std::size_t>(target)] < 2) ++target;
    std::vector<int> cell;
    for (std::size_t v = 0; v < n; ++v) {
      if (colors[v] == target) cell.push_back(static_cast<int>(v));
    }
    return cell;
  }

  static std::vector<int> individualize(std::vector<int> const& colors, int v) {
    std::vector<int> keys(colors.size());
    for (std::size_t u = 0; u < colors.size(); ++u) {
      keys[u] = 2 * colors[u] + (static_cast<int>(u) == v ? 0 : 1);
    }
    return dense_ranks(keys);
  }

  // Leaves with equal certificates differ by the automorphism
  // v -> (node at position_a[v] in leaf b).
  void record_automorphism(std::vector<int> const& position_a, std::vector<int> const& position_b) {
    auto const n = position_a.size();
    std::vector<int> order_b(n);
    for (std::size_t v = 0; v < n; ++v) order_b[static_cast<std::size_t>(position_b[v])] = static_cast<int>(v);
    std::vector<int> gamma(n);
    for (std::size_t v = 0; v < n; ++v) gamma[v] = order_b[static_cast<std::size_t>(position_a[v])];
    automorphisms_.push_back(std::move(gamma));
  }

  int common_prefix(std::vector<int> const& other) const {
    std::size_t i = 0;
    while (i < path_.size() && i < other.size() && path_[i] == other[i]) ++i;
    return static_cast<int>(i);
  }

  // Orbits of the group generated by the stored automorphisms that fix the
  // current path pointwise; a subgroup of the true stabilizer, so pruning
  // with it is sound.
  bool in_explored_orbit(int v, std::vector<int> const& tried) const {
    if (tried.empty() || automorphisms_.empty()) return false;
    auto const n = static_cast<std::size_t>(g_.size());
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
      while (parent[static_cast<std::size_t>(x)] != x) {
        parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        x = parent[static_cast<std::size_t>(x)];
      }
      return x;
    };
    for (auto const& gamma : automorphisms_) {
      bool fixes_path = std::all_of(path_.begin(), path_.end(),
                                    [&](int p) { return gamma[static_cast<std::size_t>(p)] == p; });
      if (!fixes_path) continue;
      for (std::size_t x = 0; x < n; ++x) {
        int a = find(static_cast<int>(x));
        int b = find(gamma[x]);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
      }
    }
    int const root = find(v);
    return std::any_of(tried.begin(), tried.end(), [&](int u) { return find(u) == root; });
  }

  Graph const& g_;
  std::vector<int> path_;
  bool have_leaf_ = false;
  Certificate first_, best_;
  std::vector<int> first_position_, best_position_;
  std::vector<int> first_path_, best_path_;
  std::vector<std::vector<int>> automorphisms_;
};

}  // namespace detail

/// Canonical form via colour refinement plus individualization-refinement.
/// Isomorphic labelled graphs get identical certificates.
inline CanonicalForm canonical_form(Graph const& g, int max_nodes = kDefaultCanonicalNodeLimit) {
  if (g.size() > max_nodes) {
    throw CapacityError("canonical labelling limited to " + std::to_string(max_nodes) +
                        " nodes, graph has " + std::to_string(g.size()));
  }
  return detail::CanonicalSearch(g).run();
}

}  // namespace graphcaps
