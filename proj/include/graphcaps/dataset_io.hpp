#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "graphcaps/error.hpp"
#include "graphcaps/graph.hpp"
#include "graphcaps/nn/tensor.hpp"
#include "graphcaps/random.hpp"

namespace graphcaps {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline long long parse_integer(std::string_view field, std::filesystem::path const& file,
                               std::size_t line_no) {
  field = trim(field);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    // Some TU files store integral labels as "1.0".
    double dv = 0;
    try {
      std::size_t used = 0;
      dv = std::stod(std::string(field), &used);
      if (used != field.size() || dv != static_cast<double>(static_cast<long long>(dv))) throw 0;
    } catch (...) {
      throw FormatError(file.filename().string() + ":" + std::to_string(line_no) +
                        ": expected an integer, got '" + std::string(field) + "'");
    }
    return static_cast<long long>(dv);
  }
  return value;
}

/// One integer per non-empty line (first comma-separated field).
inline std::vector<long long> read_column(std::filesystem::path const& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<long long> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto s = trim(line);
    if (s.empty()) continue;
    out.push_back(parse_integer(s.substr(0, s.find(',')), file, line_no));
  }
  return out;
}

/// Maps arbitrary integer values to contiguous ids in ascending value order.
inline std::vector<long long> contiguous_values(std::vector<long long> const& raw) {
  std::vector<long long> values = raw;
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

inline int index_of(std::vector<long long> const& sorted_values, long long v) {
  return static_cast<int>(std::lower_bound(sorted_values.begin(), sorted_values.end(), v) -
                          sorted_values.begin());
}

}  // namespace detail

/// Splits a dataset id into the TU sub-datasets it stands for. PTC is
/// published as four per-species sets whose results are averaged.
inline std::vector<std::string> dataset_members(std::string const& name) {
  if (name == "PTC") return {"PTC_MM", "PTC_FM", "PTC_MR", "PTC_FR"};
  return {name};
}

/// Loads a dataset in the TU-Dortmund flat-file format.
///
/// `root` may either contain the files directly or a `<name>/` subdirectory
/// holding them. Node ids, class values and node-label values are remapped to
/// contiguous 0-based ranges; the original values stay available in
/// `class_values` and `node_label_values`.
inline GraphDataset load_tu_dataset(std::filesystem::path const& root, std::string const& name) {
  namespace fs = std::filesystem;
  fs::path dir = root / name;
  if (!fs::exists(dir / (name + "_A.txt")) && fs::exists(root / (name + "_A.txt"))) dir = root;
  auto file = [&](char const* suffix) { return dir / (name + suffix); };

  for (char const* suffix : {"_A.txt", "_graph_indicator.txt", "_graph_labels.txt", "_node_labels.txt"}) {
    if (!fs::exists(file(suffix))) throw IoError("missing dataset file " + file(suffix).string());
  }

  auto const indicator = detail::read_column(file("_graph_indicator.txt"));
  auto const graph_labels = detail::read_column(file("_graph_labels.txt"));
  auto const node_labels = detail::read_column(file("_node_labels.txt"));

  if (node_labels.size() != indicator.size()) {
    throw FormatError(file("_node_labels.txt").filename().string() + ": " +
                      std::to_string(node_labels.size()) + " labels for " +
                      std::to_string(indicator.size()) + " nodes");
  }
  auto const num_graphs = graph_labels.size();
  if (num_graphs == 0) throw FormatError(name + ": no graphs");

  // Node ids are 1-based and grouped by graph.
  std::vector<int> node_graph(indicator.size());
  std::vector<int> local_index(indicator.size());
  std::vector<int> graph_sizes(num_graphs, 0);
  for (std::size_t i = 0; i < indicator.size(); ++i) {
    auto gid = indicator[i];
    if (gid < 1 || static_cast<std::size_t>(gid) > num_graphs) {
      throw FormatError(file("_graph_indicator.txt").filename().string() + ":" +
                        std::to_string(i + 1) + ": graph id " + std::to_string(gid) +
                        " outside [1, " + std::to_string(num_graphs) + "]");
    }
    node_graph[i] = static_cast<int>(gid - 1);
    local_index[i] = graph_sizes[static_cast<std::size_t>(gid - 1)]++;
  }
  for (std::size_t g = 0; g < num_graphs; ++g) {
    if (graph_sizes[g] == 0) {
      throw FormatError(name + ": graph " + std::to_string(g + 1) + " has zero nodes");
    }
  }

  std::vector<std::vector<Edge>> graph_edges(num_graphs);
  {
    auto const path = file("_A.txt");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto s = detail::trim(line);
      if (s.empty()) continue;
      auto comma = s.find(',');
      if (comma == std::string_view::npos) {
        throw FormatError(path.filename().string() + ":" + std::to_string(line_no) +
                          ": expected 'u, v'");
      }
      auto u = detail::parse_integer(s.substr(0, comma), path, line_no);
      auto v = detail::parse_integer(s.substr(comma + 1), path, line_no);
      auto const n_total = static_cast<long long>(indicator.size());
      if (u < 1 || v < 1 || u > n_total || v > n_total) {
        throw FormatError(path.filename().string() + ":" + std::to_string(line_no) +
                          ": edge references unknown node");
      }
      auto ui = static_cast<std::size_t>(u - 1);
      auto vi = static_cast<std::size_t>(v - 1);
      if (node_graph[ui] != node_graph[vi]) {
        throw FormatError(path.filename().string() + ":" + std::to_string(line_no) +
                          ": edge joins nodes of different graphs");
      }
      if (ui == vi) continue;
      graph_edges[static_cast<std::size_t>(node_graph[ui])].emplace_back(local_index[ui], local_index[vi]);
    }
  }

  GraphDataset ds;
  ds.name = name;
  ds.class_values = detail::contiguous_values(graph_labels);
  ds.node_label_values = detail::contiguous_values(node_labels);
  ds.num_classes = static_cast<int>(ds.class_values.size());
  ds.label_alphabet_size = static_cast<int>(ds.node_label_values.size());

  std::vector<std::vector<int>> labels(num_graphs);
  for (std::size_t g = 0; g < num_graphs; ++g) labels[g].reserve(static_cast<std::size_t>(graph_sizes[g]));
  for (std::size_t i = 0; i < indicator.size(); ++i) {
    labels[static_cast<std::size_t>(node_graph[i])].push_back(
        detail::index_of(ds.node_label_values, node_labels[i]));
  }
  ds.graphs.reserve(num_graphs);
  for (std::size_t g = 0; g < num_graphs; ++g) {
    ds.graphs.emplace_back(graph_sizes[g], graph_edges[g], std::move(labels[g]),
                           detail::index_of(ds.class_values, graph_labels[g]));
  }
  return ds;
}

/// Uniformly random node relabelling drawn from `seed`.
inline Graph permute_node_ids(Graph const& g, std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(g.size()));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  shuffle(std::span<int>(perm), rng);
  return g.relabelled(perm);
}

/// Applies `permute_node_ids` to every graph with per-graph derived seeds.
inline GraphDataset permute_dataset(GraphDataset ds, std::uint64_t seed) {
  for (std::size_t i = 0; i < ds.graphs.size(); ++i) {
    ds.graphs[i] = permute_node_ids(ds.graphs[i], derive_seed(seed, i));
  }
  return ds;
}

/// One-hot rows of width d + 1; the last channel encodes `kPad`.
inline Tensor one_hot_encode(std::span<int const> labels, int d) {
  if (d <= 0) throw DomainError("label alphabet size must be positive");
  if (labels.empty()) throw DomainError("cannot encode an empty label sequence");
  auto const width = static_cast<std::size_t>(d) + 1;
  Tensor out({labels.size(), width});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int const label = labels[i];
    if (label == kPad) {
      out[i * width + static_cast<std::size_t>(d)] = 1.0;
    } else if (label < 0 || label >= d) {
      throw DomainError("label " + std::to_string(label) + " outside [0, " + std::to_string(d) + ")");
    } else {
      out[i * width + static_cast<std::size_t>(label)] = 1.0;
    }
  }
  return out;
}

}  // namespace graphcaps
