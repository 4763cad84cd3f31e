#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include <json.hpp>

#include "graphcaps/dataset_io.hpp"
#include "graphcaps/labelling.hpp"
#include "graphcaps/models/capsnet.hpp"
#include "graphcaps/models/cnn.hpp"
#include "graphcaps/models/train.hpp"
#include "graphcaps/tensorizer.hpp"

namespace graphcaps::experiment {

enum class ModelKind { Capsules, Cnn };

inline std::string_view to_string(ModelKind m) { return m == ModelKind::Capsules ? "capsules" : "cnn"; }

inline ModelKind parse_model(std::string_view s) {
  if (s == "capsules" || s == "caps" || s == "capsnet") return ModelKind::Capsules;
  if (s == "cnn") return ModelKind::Cnn;
  throw ConfigError("unknown model '" + std::string(s) + "' (expected capsules or cnn)");
}

struct ExperimentConfig {
  std::string dataset = "MUTAG";
  LabellingProcedure labelling = LabellingProcedure::BetweennessCentrality;
  bool naive_ties = false;
  ModelKind model = ModelKind::Capsules;
  std::string preset = "paper";
  int width = 0;  // 0: rounded average graph size of the dataset
  int field_size = 10;
  std::size_t epochs = 0;  // 0: preset default
  std::size_t batch_size = 50;
  double base_lr = 0.001;
  double lr_decay = 0.0;
  double min_lr = 1e-6;
  double lambda = 0.5;
  double alpha = 1.0;
  std::size_t routing_iters = 3;
  std::string loss = "auto";  // auto, margin, binary_ce
  std::size_t folds = 10;
  std::uint64_t seed = 1;
  std::string tuned_on = "MUTAG";

  void validate() const {
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (preset != "paper" && preset != "small") throw ConfigError("unknown preset '" + preset + "' (expected paper or small)");
    if (width < 0 || field_size < 1) throw ConfigError("width must be >= 0 and field size >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (!(base_lr > 0.0) || lr_decay < 0.0 || min_lr < 0.0) throw ConfigError("learning rates must be positive, decay non-negative");
    if (loss != "auto") models::parse_loss_mode(loss);
  }
};

/// Epoch budget implied by a preset.
inline std::size_t preset_epochs(std::string const& preset) { return preset == "small" ? 40 : 100; }

inline std::size_t effective_epochs(ExperimentConfig const& cfg) {
  return cfg.epochs != 0 ? cfg.epochs : preset_epochs(cfg.preset);
}

inline int effective_width(ExperimentConfig const& cfg, GraphDataset const& ds) {
  if (cfg.width > 0) return cfg.width;
  return std::max(1, static_cast<int>(std::lround(ds.average_graph_size())));
}

inline TensorizerOptions tensorizer_options(ExperimentConfig const& cfg, GraphDataset const& ds) {
  TensorizerOptions o;
  o.width = effective_width(cfg, ds);
  o.field_size = cfg.field_size;
  o.procedure = cfg.labelling;
  o.ties = cfg.naive_ties ? TieBreak::NodeIndex : TieBreak::Consistent;
  return o;
}

inline models::CapsNetConfig capsnet_config(ExperimentConfig const& cfg, std::size_t num_classes) {
  auto c = cfg.preset == "small" ? models::CapsNetConfig::small() : models::CapsNetConfig::paper();
  c.routing_iters = cfg.routing_iters;
  c.margin.lambda = cfg.lambda;
  c.alpha = cfg.alpha;
  c.loss_mode = cfg.loss == "auto" ? models::default_loss_mode(num_classes) : models::parse_loss_mode(cfg.loss);
  return c;
}

inline models::CnnConfig cnn_config(ExperimentConfig const&) { return {}; }

inline models::TrainConfig train_config(ExperimentConfig const& cfg, std::uint64_t seed) {
  models::TrainConfig t;
  t.epochs = effective_epochs(cfg);
  t.batch_size = cfg.batch_size;
  t.adam.base_lr = cfg.base_lr;
  t.adam.decay = cfg.lr_decay;
  t.adam.min_lr = cfg.min_lr;
  t.seed = seed;
  return t;
}

/// Row label used in reports, e.g. "BC + Capsules".
inline std::string variant_name(ExperimentConfig const& cfg) {
  std::string s = cfg.labelling == LabellingProcedure::BetweennessCentrality ? "BC" : "Canonical";
  if (cfg.naive_ties) s += " (index ties)";
  return s + (cfg.model == ModelKind::Capsules ? " + Capsules" : " + CNN");
}

inline nlohmann::ordered_json to_json(ExperimentConfig const& c) {
  return {{"dataset", c.dataset},
          {"labelling", std::string(to_string(c.labelling))},
          {"naive_ties", c.naive_ties},
          {"model", std::string(to_string(c.model))},
          {"preset", c.preset},
          {"width", c.width},
          {"field_size", c.field_size},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"base_lr", c.base_lr},
          {"lr_decay", c.lr_decay},
          {"min_lr", c.min_lr},
          {"lambda", c.lambda},
          {"alpha", c.alpha},
          {"routing_iters", c.routing_iters},
          {"loss", c.loss},
          {"folds", c.folds},
          {"seed", c.seed},
          {"tuned_on", c.tuned_on}};
}

inline ExperimentConfig config_from_json(nlohmann::json const& j) {
  ExperimentConfig c;
  c.dataset = j.value("dataset", c.dataset);
  c.labelling = parse_labelling(j.value("labelling", std::string(to_string(c.labelling))));
  c.naive_ties = j.value("naive_ties", c.naive_ties);
  c.model = parse_model(j.value("model", std::string(to_string(c.model))));
  c.preset = j.value("preset", c.preset);
  c.width = j.value("width", c.width);
  c.field_size = j.value("field_size", c.field_size);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.base_lr = j.value("base_lr", c.base_lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.min_lr = j.value("min_lr", c.min_lr);
  c.lambda = j.value("lambda", c.lambda);
  c.alpha = j.value("alpha", c.alpha);
  c.routing_iters = j.value("routing_iters", c.routing_iters);
  c.loss = j.value("loss", c.loss);
  c.folds = j.value("folds", c.folds);
  c.seed = j.value("seed", c.seed);
  c.tuned_on = j.value("tuned_on", c.tuned_on);
  return c;
}

}  // namespace graphcaps::experiment
