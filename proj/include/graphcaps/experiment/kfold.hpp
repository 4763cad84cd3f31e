#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "graphcaps/error.hpp"
#include "graphcaps/random.hpp"

namespace graphcaps::experiment {

struct FoldSplit {
  std::vector<std::vector<std::size_t>> folds;
  /// One message per class too small to appear in every fold.
  std::vector<std::string> warnings;

  /// Every index outside fold `f`, ascending.
  std::vector<std::size_t> train_indices(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) out.insert(out.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

/// Stratified k-fold assignment.
///
/// Each class is shuffled with the seeded generator and dealt round-robin;
/// a class starts dealing where the previous class stopped, so fold sizes
/// differ by at most one overall as well as within every class.
inline FoldSplit kfold_split(std::size_t n_samples, std::size_t folds, std::uint64_t seed,
                             std::span<int const> strata) {
  if (folds < 2) throw DomainError("need at least 2 folds");
  if (folds > n_samples) {
    throw DomainError("cannot split " + std::to_string(n_samples) + " samples into " + std::to_string(folds) + " folds");
  }
  if (strata.size() != n_samples) throw DomainError("strata length does not match the sample count");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n_samples; ++i) by_class[strata[i]].push_back(i);

  FoldSplit split;
  split.folds.resize(folds);
  Rng rng(seed);
  std::size_t dealt = 0;
  for (auto& [label, members] : by_class) {
    if (members.size() < folds) {
      split.warnings.push_back("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                               " samples, fewer than " + std::to_string(folds) + " folds");
    }
    shuffle(std::span(members), rng);
    for (std::size_t i = 0; i < members.size(); ++i) split.folds[(dealt + i) % folds].push_back(members[i]);
    dealt += members.size();
  }
  for (auto& f : split.folds) std::sort(f.begin(), f.end());
  return split;
}

}  // namespace graphcaps::experiment
