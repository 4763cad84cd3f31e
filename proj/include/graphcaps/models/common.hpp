#pragma once

#include <algorithm>
#include <concepts>
#include <cstring>
#include <span>
#include <vector>

#include "graphcaps/nn/parameter.hpp"
#include "graphcaps/tensorizer.hpp"

namespace graphcaps::models {

using graphcaps::to_string;

/// Batch-mean loss split into its terms; `total` = classification + alpha * reconstruction.
struct LossParts {
  double total = 0.0;
  double classification = 0.0;
  double reconstruction = 0.0;
};

/// What the trainer and the experiment harness need from a model.
template <typename M>
concept Classifier = requires(M m, M const cm, Tensor const& x, std::span<int const> y, Rng& rng) {
  { m.parameters() } -> std::same_as<std::vector<nn::Parameter*>>;
  { m.loss_and_grad(x, y, rng) } -> std::same_as<LossParts>;
  { m.predict(x) } -> std::same_as<std::vector<int>>;
  { m.init(std::uint64_t{}) };
};

/// Stacks the selected samples into a batch tensor (batch, w, k, d + 1).
inline Tensor gather_batch(TensorSet const& set, std::span<std::size_t const> indices) {
  if (indices.empty()) throw DomainError("cannot build an empty batch");
  auto shape = set.sample_shape();
  shape.insert(shape.begin(), indices.size());
  Tensor x(shape);
  std::size_t const n = set.sample_size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= set.size()) throw DomainError("sample index out of range");
    auto src = set.sample(indices[b]);
    std::memcpy(x.data() + b * n, src.data(), n * sizeof(double));
  }
  return x;
}

inline std::vector<int> gather_labels(TensorSet const& set, std::span<std::size_t const> indices) {
  std::vector<int> y;
  y.reserve(indices.size());
  for (auto i : indices) y.push_back(set.labels.at(i));
  return y;
}

/// Index of the largest value; the lowest index wins ties.
inline int argmax(std::span<double const> values) {
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

inline void zero_grads(std::vector<nn::Parameter*> const& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace graphcaps::models
