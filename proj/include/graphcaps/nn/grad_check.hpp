#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "graphcaps/nn/parameter.hpp"

namespace graphcaps::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Gradients smaller than this are compared in absolute rather than relative terms.
inline constexpr double kGradCheckFloor = 1e-6;

namespace detail {

inline void record(GradCheckResult& r, std::size_t index, double analytic, double numeric) {
  double const err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  if (r.checked++ == 0 || err > r.max_relative_error) {
    r.max_relative_error = err;
    r.worst_index = index;
    r.analytic = analytic;
    r.numeric = numeric;
  }
}

}  // namespace detail

/// Scalar function that returns f(x) and writes df/dx into its second argument.
using Differentiable = std::function<double(std::span<double const>, std::span<double>)>;

/// Central differences against the reverse-mode gradient at `point`.
inline GradCheckResult grad_check(Differentiable const& f, std::span<double const> point, double h = 1e-5) {
  if (!(h > 0.0)) throw DomainError("finite-difference step must be positive");
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> analytic(x.size());
  std::vector<double> scratch(x.size());
  f(x, analytic);
  GradCheckResult r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double const x0 = x[i];
    x[i] = x0 + h;
    double const up = f(x, scratch);
    x[i] = x0 - h;
    double const down = f(x, scratch);
    x[i] = x0;
    detail::record(r, i, analytic[i], (up - down) / (2.0 * h));
  }
  return r;
}

/// Same check over model parameters. `loss` must zero, then fill, every grad.
///
/// With `max_coords` nonzero, a seeded random subset of coordinates is probed.
inline GradCheckResult grad_check(std::vector<Parameter*> const& params, std::function<double()> const& loss,
                                  double h = 1e-5, std::size_t max_coords = 0, std::uint64_t seed = 0) {
  if (!(h > 0.0)) throw DomainError("finite-difference step must be positive");
  loss();
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::vector<double> analytic;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->value.size(); ++i) {
      coords.emplace_back(p, i);
      analytic.push_back(params[p]->grad[i]);
    }
  }
  std::vector<std::size_t> pick(coords.size());
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  if (max_coords != 0 && max_coords < pick.size()) {
    Rng rng(seed);
    shuffle(std::span(pick), rng);
    pick.resize(max_coords);
    std::sort(pick.begin(), pick.end());
  }
  GradCheckResult r;
  for (std::size_t idx : pick) {
    auto [p, i] = coords[idx];
    double& x = params[p]->value[i];
    double const x0 = x;
    x = x0 + h;
    double const up = loss();
    x = x0 - h;
    double const down = loss();
    x = x0;
    detail::record(r, idx, analytic[idx], (up - down) / (2.0 * h));
  }
  return r;
}

/// Name of the parameter owning flat coordinate `index` in declaration order.
inline std::string parameter_name_at(std::vector<Parameter*> const& params, std::size_t index) {
  for (auto const* p : params) {
    if (index < p->value.size()) return p->name + "[" + std::to_string(index) + "]";
    index -= p->value.size();
  }
  return "?";
}

}  // namespace graphcaps::nn
