#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "graphcaps/models/common.hpp"
#include "graphcaps/nn/adam.hpp"

namespace graphcaps::models {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 50;
  nn::AdamConfig adam{};
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossParts loss;  // sample-weighted mean over the epoch's batches
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> trace;
  double seconds = 0.0;
};

/// Mini-batch Adam with a seeded shuffle per epoch. The model is initialised
/// from `cfg.seed`, so equal seeds give bitwise-equal parameters.
template <Classifier M>
TrainResult train(M& model, TensorSet const& data, std::span<std::size_t const> indices, TrainConfig const& cfg,
                  std::function<void(EpochRecord const&)> const& on_epoch = {}) {
  if (cfg.epochs == 0) throw ConfigError("epochs must be at least 1");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (indices.empty()) throw DomainError("training split is empty");
  model.init(derive_seed(cfg.seed, 1));
  Rng shuffle_rng(derive_seed(cfg.seed, 2));
  Rng noise_rng(derive_seed(cfg.seed, 3));
  auto params = model.parameters();
  nn::AdamState state;
  std::vector<std::size_t> order(indices.begin(), indices.end());
  TrainResult result;
  auto const start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto const epoch_start = std::chrono::steady_clock::now();
    shuffle(std::span(order), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = nn::learning_rate(cfg.adam, epoch);
    for (std::size_t at = 0, step = 0; at < order.size(); at += cfg.batch_size, ++step) {
      auto batch = std::span<std::size_t const>(order).subspan(at, std::min(cfg.batch_size, order.size() - at));
      auto x = gather_batch(data, batch);
      auto y = gather_labels(data, batch);
      auto parts = model.loss_and_grad(x, y, noise_rng);
      if (!std::isfinite(parts.total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      }
      try {
        nn::adam_step(params, state, cfg.adam, epoch);
      } catch (TrainingError const& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step));
      }
      double const w = static_cast<double>(batch.size()) / static_cast<double>(order.size());
      rec.loss.total += w * parts.total;
      rec.loss.classification += w * parts.classification;
      rec.loss.reconstruction += w * parts.reconstruction;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.trace.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

/// Predictions in chunks of `batch_size`.
template <Classifier M>
std::vector<int> predict_all(M& model, TensorSet const& data, std::span<std::size_t const> indices,
                             std::size_t batch_size = 50) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t at = 0; at < indices.size(); at += batch_size) {
    auto batch = indices.subspan(at, std::min(batch_size, indices.size() - at));
    auto y = model.predict(gather_batch(data, batch));
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

template <Classifier M>
double accuracy(M& model, TensorSet const& data, std::span<std::size_t const> indices) {
  if (indices.empty()) throw DomainError("cannot score an empty split");
  auto y = predict_all(model, data, indices);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) hit += y[i] == data.labels.at(indices[i]);
  return static_cast<double>(hit) / static_cast<double>(indices.size());
}

/// Loss trace as CSV: epoch,total,margin,mse,seconds.
inline void write_loss_trace(std::ostream& os, std::vector<EpochRecord> const& trace) {
  os << "epoch,total,margin,mse,seconds\n";
  auto const old = os.precision(17);
  for (auto const& r : trace) {
    os << r.epoch << ',' << r.loss.total << ',' << r.loss.classification << ',' << r.loss.reconstruction << ','
       << r.seconds << '\n';
  }
  os.precision(old);
}

}  // namespace graphcaps::models
