#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "graphcaps/error.hpp"

namespace graphcaps {

/// Placeholder for a missing node in node sequences and receptive fields.
inline constexpr int kPad = -1;

using Edge = std::pair<int, int>;

/// Undirected graph with categorical node labels and a class label.
///
/// Adjacency lists are kept sorted and symmetric; there are no self-loops and
/// no parallel edges.
class Graph {
 public:
  Graph() = default;

  /// Builds a graph from an edge list. Duplicate and reversed edges collapse
  /// into one undirected edge; self-loops are rejected.
  Graph(int n, std::vector<Edge> const& edges, std::vector<int> node_labels,
        int class_label = 0)
      : adjacency_(static_cast<std::size_t>(n)),
        node_labels_(std::move(node_labels)),
        class_label_(class_label) {
    if (n <= 0) throw DomainError("graph must have at least one node");
    if (node_labels_.size() != static_cast<std::size_t>(n)) {
      throw DomainError("node label count " + std::to_string(node_labels_.size()) +
                        " does not match node count " + std::to_string(n));
    }
    for (auto [u, v] : edges) {
      if (u < 0 || v < 0 || u >= n || v >= n) {
        throw DomainError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                          ") references a node outside [0, " + std::to_string(n) + ")");
      }
      if (u == v) throw DomainError("self-loop on node " + std::to_string(u));
      adjacency_[static_cast<std::size_t>(u)].push_back(v);
      adjacency_[static_cast<std::size_t>(v)].push_back(u);
    }
    for (auto& nbrs : adjacency_) {
      std::sort(nbrs.begin(), nbrs.end());
      nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
  }

  int size() const noexcept { return static_cast<int>(adjacency_.size()); }

  std::vector<int> const& neighbours(int v) const {
    return adjacency_[static_cast<std::size_t>(v)];
  }

  int degree(int v) const { return static_cast<int>(neighbours(v).size()); }

  bool has_edge(int u, int v) const {
    auto const& nbrs = neighbours(u);
    return std::binary_search(nbrs.begin(), nbrs.end(), v);
  }

  std::size_t num_edges() const noexcept {
    std::size_t twice = 0;
    for (auto const& nbrs : adjacency_) twice += nbrs.size();
    return twice / 2;
  }

  /// Edges as (u, v) with u < v, sorted.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (int u = 0; u < size(); ++u) {
      for (int v : neighbours(u)) {
        if (u < v) out.emplace_back(u, v);
      }
    }
    return out;
  }

  std::vector<int> const& node_labels() const noexcept { return node_labels_; }
  int node_label(int v) const { return node_labels_[static_cast<std::size_t>(v)]; }

  int class_label() const noexcept { return class_label_; }
  void set_class_label(int c) noexcept { class_label_ = c; }

  /// Graph whose node `perm[v]` is this graph's node `v`.
  Graph relabelled(std::vector<int> const& perm) const {
    std::vector<Edge> e;
    e.reserve(num_edges());
    for (auto [u, v] : edges()) {
      e.emplace_back(perm[static_cast<std::size_t>(u)], perm[static_cast<std::size_t>(v)]);
    }
    std::vector<int> labels(node_labels_.size());
    for (std::size_t v = 0; v < labels.size(); ++v) {
      labels[static_cast<std::size_t>(perm[v])] = node_labels_[v];
    }
    return Graph(size(), e, std::move(labels), class_label_);
  }

  friend bool operator==(Graph const&, Graph const&) = default;

 private:
  std::vector<std::vector<int>> adjacency_;
  std::vector<int> node_labels_;
  int class_label_ = 0;
};

/// A labelled collection of graphs with contiguous class and node-label ids.
struct GraphDataset {
  std::string name;
  std::vector<Graph> graphs;
  int num_classes = 0;
  /// Size of the node-label alphabet (d).
  int label_alphabet_size = 0;
  /// Original file values, indexed by the contiguous id they map to.
  std::vector<long long> class_values;
  std::vector<long long> node_label_values;

  std::size_t size() const noexcept { return graphs.size(); }

  int max_graph_size() const {
    int m = 0;
    for (auto const& g : graphs) m = std::max(m, g.size());
    return m;
  }

  double average_graph_size() const {
    if (graphs.empty()) return 0.0;
    double total = 0.0;
    for (auto const& g : graphs) total += g.size();
    return total / static_cast<double>(graphs.size());
  }

  std::vector<int> class_labels() const {
    std::vector<int> out;
    out.reserve(graphs.size());
    for (auto const& g : graphs) out.push_back(g.class_label());
    return out;
  }
};

}  // namespace graphcaps
