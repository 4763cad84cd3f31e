#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <cstdint>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "graphcaps/dataset_io.hpp"
#include "graphcaps/error.hpp"
#include "graphcaps/graph.hpp"
#include "graphcaps/labelling.hpp"
#include "graphcaps/nn/tensor.hpp"

namespace graphcaps {

struct TensorizerOptions {
  /// Anchor nodes per graph (rows).
  int width = 18;
  /// Nodes per receptive field.
  int field_size = 10;
  LabellingProcedure procedure = LabellingProcedure::BetweennessCentrality;
  TieBreak ties = TieBreak::Consistent;
  int canonical_node_limit = kDefaultCanonicalNodeLimit;
};

/// Ordered receptive field of exactly k entries (node ids or kPad).
struct ReceptiveField {
  int anchor = kPad;
  std::vector<int> members;
};

/// Node reached by the neighbourhood BFS with its hop distance.
struct Candidate {
  int node;
  int hops;
};

/// The w x k x (d + 1) encoding of one graph.
struct GraphTensor {
  Tensor data;
  std::size_t graph_index = 0;
  int class_label = 0;
};

/// First min(n, w) nodes of the ranking followed by kPad.
inline std::vector<int> node_sequence([[maybe_unused]] Graph const& g, int w,
                                      NodeRanking const& ranking) {
  if (w < 1) throw DomainError("width must be at least 1");
  std::vector<int> seq(static_cast<std::size_t>(w), kPad);
  auto const take = std::min<std::size_t>(static_cast<std::size_t>(w), ranking.order.size());
  std::copy_n(ranking.order.begin(), take, seq.begin());
  return seq;
}

/// Breadth-first rings around `anchor`, stopping after the first ring that
/// brings the count to at least k. The last ring may overshoot k.
inline std::vector<Candidate> assemble_neighbourhood(Graph const& g, int anchor, int k) {
  if (anchor < 0 || anchor >= g.size()) throw DomainError("anchor is not a node of the graph");
  std::vector<Candidate> out{{anchor, 0}};
  std::vector<char> seen(static_cast<std::size_t>(g.size()), 0);
  seen[static_cast<std::size_t>(anchor)] = 1;
  std::size_t ring_begin = 0;
  int hops = 0;
  while (out.size() < static_cast<std::size_t>(k) && ring_begin < out.size()) {
    std::size_t const ring_end = out.size();
    ++hops;
    for (std::size_t i = ring_begin; i < ring_end; ++i) {
      for (int u : g.neighbours(out[i].node)) {
        if (!seen[static_cast<std::size_t>(u)]) {
          seen[static_cast<std::size_t>(u)] = 1;
          out.push_back({u, hops});
        }
      }
    }
    ring_begin = ring_end;
  }
  return out;
}

/// Orders candidates by (hops, WL colour, canonical position), keeps the
/// first k and pads the rest.
inline ReceptiveField normalize_receptive_field(std::vector<Candidate> candidates, int k,
                                                NodeKeys const& keys,
                                                TieBreak ties = TieBreak::Consistent) {
  if (k < 1) throw DomainError("receptive field size must be at least 1");
  auto const& wl = keys.wl_colors;
  auto const& pos = keys.canonical_position;
  std::sort(candidates.begin(), candidates.end(), [&](Candidate const& a, Candidate const& b) {
    if (a.hops != b.hops) return a.hops < b.hops;
    if (ties == TieBreak::NodeIndex) return a.node < b.node;
    auto const ia = static_cast<std::size_t>(a.node), ib = static_cast<std::size_t>(b.node);
    if (wl[ia] != wl[ib]) return wl[ia] < wl[ib];
    return pos[ia] < pos[ib];
  });
  ReceptiveField field;
  field.members.assign(static_cast<std::size_t>(k), kPad);
  auto const take = std::min(candidates.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < take; ++i) field.members[i] = candidates[i].node;
  if (!candidates.empty()) field.anchor = candidates.front().node;
  return field;
}

/// Receptive fields for every slot of the node sequence; kPad anchors yield
/// all-kPad fields.
inline std::vector<ReceptiveField> receptive_fields(Graph const& g, TensorizerOptions const& opts) {
  auto const keys = compute_node_keys(g, opts.canonical_node_limit);
  auto const ranking = rank_nodes(g, opts.procedure, keys, opts.ties);
  auto const sequence = node_sequence(g, opts.width, ranking);
  std::vector<ReceptiveField> fields;
  fields.reserve(sequence.size());
  for (int anchor : sequence) {
    if (anchor == kPad) {
      fields.push_back({kPad, std::vector<int>(static_cast<std::size_t>(opts.field_size), kPad)});
    } else {
      fields.push_back(normalize_receptive_field(assemble_neighbourhood(g, anchor, opts.field_size),
                                                 opts.field_size, keys, opts.ties));
    }
  }
  return fields;
}

/// Tensor of shape w x k x (d + 1) for one graph; `d` is the dataset's
/// node-label alphabet size.
inline GraphTensor graph_to_tensor(Graph const& g, int d, TensorizerOptions const& opts,
                                   std::size_t graph_index = 0) {
  if (opts.width < 1 || opts.field_size < 1) throw DomainError("w and k must be at least 1");
  auto const fields = receptive_fields(g, opts);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(opts.width) * static_cast<std::size_t>(opts.field_size));
  for (auto const& f : fields) {
    for (int m : f.members) labels.push_back(m == kPad ? kPad : g.node_label(m));
  }
  auto encoded = one_hot_encode(labels, d);
  auto const w = static_cast<std::size_t>(opts.width);
  auto const k = static_cast<std::size_t>(opts.field_size);
  return {encoded.reshaped({w, k, static_cast<std::size_t>(d) + 1}), graph_index, g.class_label()};
}

/// Tensors of a whole dataset, stored contiguously sample-major.
struct TensorSet {
  int width = 0;
  int field_size = 0;
  /// Node-label alphabet size; tensors carry d + 1 channels.
  int label_alphabet_size = 0;
  int num_classes = 0;
  LabellingProcedure procedure = LabellingProcedure::BetweennessCentrality;
  TieBreak ties = TieBreak::Consistent;
  std::uint64_t seed = 0;
  std::vector<double> data;
  std::vector<int> labels;
  /// Anchor slots filled with padding because a graph had fewer than w nodes.
  std::size_t padded_anchors = 0;

  std::size_t channels() const { return static_cast<std::size_t>(label_alphabet_size) + 1; }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(field_size) * channels();
  }
  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const {
    return {static_cast<std::size_t>(width), static_cast<std::size_t>(field_size), channels()};
  }
  std::span<double const> sample(std::size_t i) const {
    return std::span<double const>(data).subspan(i * sample_size(), sample_size());
  }

  friend bool operator==(TensorSet const&, TensorSet const&) = default;
};

/// Tensorizes every graph. Extraction runs on up to `jobs` threads; the
/// output does not depend on the thread count.
inline TensorSet tensorize_dataset(GraphDataset const& ds, TensorizerOptions const& opts,
                                   std::uint64_t seed = 0, unsigned jobs = 1) {
  TensorSet set;
  set.width = opts.width;
  set.field_size = opts.field_size;
  set.label_alphabet_size = ds.label_alphabet_size;
  set.num_classes = ds.num_classes;
  set.procedure = opts.procedure;
  set.ties = opts.ties;
  set.seed = seed;
  set.data.assign(ds.size() * set.sample_size(), 0.0);
  set.labels.resize(ds.size());
  for (auto const& g : ds.graphs) {
    set.padded_anchors += static_cast<std::size_t>(std::max(0, opts.width - g.size()));
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < ds.size() && !failed; i = next++) {
      try {
        auto t = graph_to_tensor(ds.graphs[i], ds.label_alphabet_size, opts, i);
        std::copy(t.data.values().begin(), t.data.values().end(),
                  set.data.begin() + static_cast<std::ptrdiff_t>(i * set.sample_size()));
        set.labels[i] = t.class_label;
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, ds.size()))));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (unsigned t = 0; t < jobs; ++t) threads.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return set;
}

}  // namespace graphcaps
