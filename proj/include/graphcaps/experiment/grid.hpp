#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "graphcaps/experiment/run.hpp"

namespace graphcaps::experiment {

struct GridSpec {
  std::vector<std::size_t> epochs;
  std::vector<double> base_lr;
  std::vector<double> lr_decay;

  std::size_t size() const { return epochs.size() * base_lr.size() * lr_decay.size(); }

  /// 3 x 3 x 4 = 36 cells.
  static GridSpec paper() { return {{100, 150, 200}, {0.0005, 0.001, 0.005}, {0.25, 0.4, 0.75, 1.5}}; }
};

struct GridCell {
  std::size_t index = 0;
  std::size_t epochs = 0;
  double base_lr = 0.0;
  double lr_decay = 0.0;
  double mean = 0.0;
  double std = 0.0;
  double train_seconds_mean = 0.0;
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;
  ExperimentConfig best_config;
};

/// Means closer than this count as a tie.
inline constexpr double kGridTieTolerance = 1e-12;

/// True when `a` should be preferred over `b`: higher mean accuracy, then
/// fewer epochs, then lower learning rate, then the earlier cell.
inline bool better_cell(GridCell const& a, GridCell const& b) {
  if (std::abs(a.mean - b.mean) > kGridTieTolerance) return a.mean > b.mean;
  if (a.epochs != b.epochs) return a.epochs < b.epochs;
  if (a.base_lr != b.base_lr) return a.base_lr < b.base_lr;
  return a.index < b.index;
}

inline std::size_t pick_best(std::vector<GridCell> const& cells) {
  if (cells.empty()) throw DomainError("grid has no cells");
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    if (better_cell(cells[i], cells[best])) best = i;
  }
  return best;
}

inline std::string grid_csv(GridResult const& g) {
  std::ostringstream os;
  os << "cell,epochs,base_lr,lr_decay,mean,std,train_seconds_mean,best\n";
  os.precision(17);
  for (auto const& c : g.cells) {
    os << c.index << ',' << c.epochs << ',' << c.base_lr << ',' << c.lr_decay << ',' << c.mean << ',' << c.std << ','
       << c.train_seconds_mean << ',' << (c.index == g.best ? 1 : 0) << '\n';
  }
  return os.str();
}

/// Exhaustive search over epochs x base_lr x lr_decay by mean CV accuracy.
///
/// Cell i runs with training seeds derived from (seed, fold, i). With an
/// output directory every cell keeps its own resumable run under cells/.
inline GridResult grid_search(ExperimentConfig const& base, GridSpec const& grid, RunOptions const& opt = {}) {
  if (grid.size() == 0) throw DomainError("grid has an empty axis");
  GridResult g;
  std::size_t index = 0;
  for (auto epochs : grid.epochs) {
    for (double lr : grid.base_lr) {
      for (double decay : grid.lr_decay) {
        auto cfg = base;
        cfg.epochs = epochs;
        cfg.base_lr = lr;
        cfg.lr_decay = decay;
        auto cell_opt = opt;
        cell_opt.cell = index;
        if (!opt.out_dir.empty()) {
          char buf[16];
          std::snprintf(buf, sizeof buf, "cell%03zu", index);
          cell_opt.out_dir = opt.out_dir / "cells" / buf;
        }
        if (opt.log) opt.log("grid cell " + std::to_string(index + 1) + "/" + std::to_string(grid.size()));
        auto r = run_cv(cfg, cell_opt);
        g.cells.push_back({index, epochs, lr, decay, r.mean, r.std, r.train_seconds_mean});
        if (!opt.out_dir.empty()) {
          g.best = pick_best(g.cells);
          write_text_atomic(opt.out_dir / "grid.csv", grid_csv(g));
        }
        ++index;
      }
    }
  }
  g.best = pick_best(g.cells);
  g.best_config = base;
  g.best_config.epochs = g.cells[g.best].epochs;
  g.best_config.base_lr = g.cells[g.best].base_lr;
  g.best_config.lr_decay = g.cells[g.best].lr_decay;
  if (!opt.out_dir.empty()) write_text_atomic(opt.out_dir / "grid.csv", grid_csv(g));
  return g;
}

}  // namespace graphcaps::experiment
