#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "graphcaps/analysis/tsne.hpp"
#include "graphcaps/models/capsnet.hpp"
#include "graphcaps/models/cnn.hpp"
#include "graphcaps/tensorizer.hpp"

namespace graphcaps::analysis {

enum class EmbeddingSource { RawTensor, CnnInner, PrimaryCaps };

inline std::string_view to_string(EmbeddingSource s) {
  switch (s) {
    case EmbeddingSource::RawTensor: return "raw";
    case EmbeddingSource::CnnInner: return "cnn";
    case EmbeddingSource::PrimaryCaps: return "caps";
  }
  return "?";
}

inline EmbeddingSource parse_source(std::string_view s) {
  if (s == "raw") return EmbeddingSource::RawTensor;
  if (s == "cnn") return EmbeddingSource::CnnInner;
  if (s == "caps") return EmbeddingSource::PrimaryCaps;
  throw ConfigError("unknown embedding source '" + std::string(s) + "' (expected raw, cnn or caps)");
}

struct EmbeddingSet {
  Matrix points;
  std::vector<int> labels;
  /// Row i belongs to graph ids[i] of the dataset.
  std::vector<std::size_t> ids;
  EmbeddingSource source = EmbeddingSource::RawTensor;
};

/// Flattened graph tensors, one row per graph.
inline EmbeddingSet raw_embeddings(TensorSet const& set) {
  EmbeddingSet e;
  e.source = EmbeddingSource::RawTensor;
  e.points.resize(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(set.sample_size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto const s = set.sample(i);
    for (std::size_t j = 0; j < s.size(); ++j) e.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s[j];
    e.ids.push_back(i);
  }
  e.labels = set.labels;
  return e;
}

namespace detail {

/// Runs `layer(batch)` over the dataset in batches and stacks the rows.
template <typename Layer>
EmbeddingSet stack_rows(TensorSet const& set, EmbeddingSource source, Layer&& layer, std::size_t batch_size = 50) {
  EmbeddingSet e;
  e.source = source;
  e.labels = set.labels;
  std::vector<std::size_t> all(set.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  e.ids = all;
  for (std::size_t at = 0; at < all.size(); at += batch_size) {
    auto idx = std::span<std::size_t const>(all).subspan(at, std::min(batch_size, all.size() - at));
    Tensor const out = layer(models::gather_batch(set, idx));
    auto const width = static_cast<Eigen::Index>(out.size() / idx.size());
    if (at == 0) e.points.resize(static_cast<Eigen::Index>(all.size()), width);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (Eigen::Index c = 0; c < width; ++c) {
        e.points(static_cast<Eigen::Index>(at + r), c) = out[r * static_cast<std::size_t>(width) + static_cast<std::size_t>(c)];
      }
    }
  }
  return e;
}

}  // namespace detail

/// Capsule network layers: raw tensors or primary capsules before routing.
inline EmbeddingSet extract_embeddings(models::CapsNet& model, TensorSet const& set, EmbeddingSource source) {
  if (source == EmbeddingSource::RawTensor) return raw_embeddings(set);
  if (source != EmbeddingSource::PrimaryCaps) {
    throw DomainError("a capsule network has no '" + std::string(to_string(source)) + "' layer");
  }
  return detail::stack_rows(set, source, [&](Tensor const& x) { return model.primary_capsules(x); });
}

/// CNN layers: raw tensors or the last hidden dense activations.
inline EmbeddingSet extract_embeddings(models::Cnn& model, TensorSet const& set, EmbeddingSource source) {
  if (source == EmbeddingSource::RawTensor) return raw_embeddings(set);
  if (source != EmbeddingSource::CnnInner) {
    throw DomainError("a CNN has no '" + std::string(to_string(source)) + "' layer");
  }
  return detail::stack_rows(set, source, [&](Tensor const& x) { return model.inner_activations(x); });
}

struct ClusterDistances {
  std::vector<int> classes;
  /// Mean squared distance to the class centre, per class.
  std::vector<double> intra;
  /// Mean squared distance of every point to its own class centre.
  double pooled_intra = 0.0;
  /// Centre-to-centre Euclidean distance (mean over class pairs); absent with one class.
  std::optional<double> inter;
  std::vector<std::vector<double>> centres;
};

/// Intra-class spread and inter-class centre distance of a labelled point set.
/// Classes are the distinct labels, plus every index below `num_classes`,
/// which must be non-empty.
inline ClusterDistances cluster_distances(Matrix const& points, std::span<int const> labels, int num_classes = 0) {
  if (static_cast<std::size_t>(points.rows()) != labels.size()) {
    throw DomainError("point count " + std::to_string(points.rows()) + " does not match label count " +
                      std::to_string(labels.size()));
  }
  std::map<int, std::vector<Eigen::Index>> members;
  for (int c = 0; c < num_classes; ++c) members[c];
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<Eigen::Index>(i));
  ClusterDistances out;
  double total = 0.0;
  for (auto const& [label, rows] : members) {
    if (rows.empty()) throw DomainError("class " + std::to_string(label) + " has no points");
    Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(points.cols());
    for (auto r : rows) mu += points.row(r);
    mu /= static_cast<double>(rows.size());
    double s = 0.0;
    for (auto r : rows) s += (points.row(r) - mu).squaredNorm();
    total += s;
    out.classes.push_back(label);
    out.intra.push_back(s / static_cast<double>(rows.size()));
    out.centres.emplace_back(mu.data(), mu.data() + mu.size());
  }
  out.pooled_intra = labels.empty() ? 0.0 : total / static_cast<double>(labels.size());
  if (out.centres.size() >= 2) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < out.centres.size(); ++a) {
      for (std::size_t b = a + 1; b < out.centres.size(); ++b, ++pairs) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < out.centres[a].size(); ++j) {
          d2 += (out.centres[a][j] - out.centres[b][j]) * (out.centres[a][j] - out.centres[b][j]);
        }
        sum += std::sqrt(d2);
      }
    }
    out.inter = sum / static_cast<double>(pairs);
  }
  return out;
}

/// graph id, class, coordinates; header comments record how the layout was made.
inline std::string embeddings_csv(EmbeddingSet const& e, TsneResult const& t) {
  std::ostringstream os;
  os.precision(17);
  os << "# source=" << to_string(e.source) << " seed=" << t.config.seed << " perplexity=" << t.config.perplexity
     << " iterations=" << t.config.iterations << " initial_kl=" << t.initial_kl << " final_kl=" << t.final_kl << '\n';
  if (e.source == EmbeddingSource::RawTensor) os << "# raw rows are the flattened w x k x (d+1) graph tensors\n";
  os << "graph_id,class";
  for (Eigen::Index c = 0; c < t.coords.cols(); ++c) {
    if (c < 3) {
      os << ',' << "xyz"[c];
    } else {
      os << ",d" << c;
    }
  }
  os << '\n';
  for (Eigen::Index i = 0; i < t.coords.rows(); ++i) {
    os << e.ids[static_cast<std::size_t>(i)] << ',' << e.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < t.coords.cols(); ++c) os << ',' << t.coords(i, c);
    os << '\n';
  }
  return os.str();
}

/// One row per source layer: intra per class, pooled intra, inter.
inline std::string distances_csv(std::vector<std::pair<EmbeddingSource, ClusterDistances>> const& rows) {
  std::vector<int> classes;
  for (auto const& [src, d] : rows) {
    for (int c : d.classes) {
      if (std::find(classes.begin(), classes.end(), c) == classes.end()) classes.push_back(c);
    }
  }
  std::sort(classes.begin(), classes.end());
  std::ostringstream os;
  os.precision(10);
  os << "source";
  for (int c : classes) os << ",intra_class" << c;
  os << ",intra_pooled,inter\n";
  for (auto const& [src, d] : rows) {
    os << to_string(src);
    for (int c : classes) {
      os << ',';
      auto it = std::find(d.classes.begin(), d.classes.end(), c);
      if (it != d.classes.end()) os << d.intra[static_cast<std::size_t>(it - d.classes.begin())];
    }
    os << ',' << d.pooled_intra << ',';
    if (d.inter) os << *d.inter;
    os << '\n';
  }
  return os.str();
}

}  // namespace graphcaps::analysis
