#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "graphcaps/dataset_io.hpp"
#include "graphcaps/experiment/config.hpp"
#include "graphcaps/experiment/kfold.hpp"
#include "graphcaps/experiment/manifest.hpp"
#include "graphcaps/random.hpp"
#include "graphcaps/tensor_cache.hpp"
#include "graphcaps/tensorizer.hpp"

namespace graphcaps::experiment {

// Tags for the seeds derived from the run seed.
inline constexpr std::uint64_t kPermutationStream = 0x7065726d;  // "perm"
inline constexpr std::uint64_t kFoldStream = 0x666f6c64;         // "fold"

inline std::uint64_t permutation_seed(std::uint64_t seed) { return derive_seed(seed, kPermutationStream); }
inline std::uint64_t fold_assignment_seed(std::uint64_t seed) { return derive_seed(seed, kFoldStream); }
/// Training seed of one fold of one grid cell (cell 0 outside a grid).
inline std::uint64_t fold_training_seed(std::uint64_t seed, std::size_t fold, std::size_t cell) {
  return derive_seed(seed, fold + 1, cell);
}

inline double mean_of(std::span<double const> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Population standard deviation (divides by n).
inline double population_std(std::span<double const> xs) {
  if (xs.empty()) return 0.0;
  double const m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

/// Data root: explicit path, else $GRAPHCAPS_DATA, else ./data.
inline std::filesystem::path resolve_data_root(std::filesystem::path const& explicit_root = {}) {
  if (!explicit_root.empty()) return explicit_root;
  if (char const* env = std::getenv("GRAPHCAPS_DATA"); env != nullptr && *env != '\0') return env;
  return "data";
}

struct RunOptions {
  std::filesystem::path data_root;
  std::filesystem::path cache_dir = "cache";
  /// Results directory; empty keeps everything in memory.
  std::filesystem::path out_dir;
  unsigned jobs = 1;
  std::size_t cell = 0;
  std::string command_line;
  /// Tensorize again even when a cache file exists.
  bool rebuild_cache = false;
  std::function<void(std::string const&)> log;
};

/// Tensors of one dataset after the one-off node-id permutation.
struct PreparedData {
  std::string name;
  TensorSet tensors;
  std::filesystem::path cache_file;
  bool cache_warm = false;
  double tensorize_seconds = 0.0;
  nlohmann::ordered_json checksums;
};

inline PreparedData prepare_dataset(ExperimentConfig const& cfg, std::string const& member, RunOptions const& opt) {
  auto const root = resolve_data_root(opt.data_root);
  auto ds = load_tu_dataset(root, member);
  PreparedData p;
  p.name = member;
  auto dir = root / member;
  p.checksums = directory_checksums(std::filesystem::is_directory(dir) ? dir : root);
  auto const topts = tensorizer_options(cfg, ds);
  auto const seed = permutation_seed(cfg.seed);
  p.cache_file = opt.cache_dir / tensor_cache_name(member, topts, seed);
  if (!opt.rebuild_cache && std::filesystem::exists(p.cache_file)) {
    p.tensors = read_tensor_cache(p.cache_file);
    p.cache_warm = true;
    return p;
  }
  auto const start = std::chrono::steady_clock::now();
  ds = permute_dataset(std::move(ds), seed);
  p.tensors = tensorize_dataset(ds, topts, seed, std::max(1u, opt.jobs));
  p.tensorize_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_tensor_cache(p.cache_file, p.tensors);
  return p;
}

struct FoldOutcome {
  std::string member;
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t correct = 0;
  double train_seconds = 0.0;
  bool resumed = false;

  double accuracy() const { return n_test == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n_test); }
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<std::string> members;
  /// Every fold of every member, member-major.
  std::vector<FoldOutcome> outcomes;
  /// Per-fold accuracy; for a multi-member dataset, the member average of fold f.
  std::vector<double> fold_accuracies;
  double mean = 0.0;
  double std = 0.0;
  double train_seconds_mean = 0.0;
  double train_seconds_std = 0.0;
  double tensorize_seconds = 0.0;
  bool cache_warm = true;
  std::string version = version_stamp();
  std::vector<std::string> warnings;
};

/// Fills fold_accuracies, mean, std and the timing summary from `outcomes`.
inline void summarize(ExperimentResult& r) {
  std::size_t const folds = r.config.folds;
  r.fold_accuracies.assign(folds, 0.0);
  std::vector<std::size_t> counts(folds, 0);
  std::vector<double> seconds;
  for (auto const& o : r.outcomes) {
    r.fold_accuracies.at(o.fold) += o.accuracy();
    ++counts[o.fold];
    seconds.push_back(o.train_seconds);
  }
  for (std::size_t f = 0; f < folds; ++f) {
    if (counts[f] != 0) r.fold_accuracies[f] /= static_cast<double>(counts[f]);
  }
  r.mean = mean_of(r.fold_accuracies);
  r.std = population_std(r.fold_accuracies);
  r.train_seconds_mean = mean_of(seconds);
  r.train_seconds_std = population_std(seconds);
}

inline nlohmann::ordered_json to_json(ExperimentResult const& r) {
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (auto const& o : r.outcomes) {
    folds.push_back({{"member", o.member},
                     {"fold", o.fold},
                     {"n_train", o.n_train},
                     {"n_test", o.n_test},
                     {"correct", o.correct},
                     {"train_seconds", o.train_seconds}});
  }
  return {{"config", to_json(r.config)},
          {"members", r.members},
          {"folds", folds},
          {"fold_accuracies", r.fold_accuracies},
          {"mean", r.mean},
          {"std", r.std},
          {"train_seconds_mean", r.train_seconds_mean},
          {"train_seconds_std", r.train_seconds_std},
          {"tensorize_seconds", r.tensorize_seconds},
          {"cache_warm", r.cache_warm},
          {"version", r.version},
          {"warnings", r.warnings}};
}

inline ExperimentResult result_from_json(nlohmann::json const& j) {
  ExperimentResult r;
  r.config = config_from_json(j.at("config"));
  r.members = j.at("members").get<std::vector<std::string>>();
  for (auto const& f : j.at("folds")) {
    FoldOutcome o;
    o.member = f.at("member").get<std::string>();
    o.fold = f.at("fold").get<std::size_t>();
    o.n_train = f.at("n_train").get<std::size_t>();
    o.n_test = f.at("n_test").get<std::size_t>();
    o.correct = f.at("correct").get<std::size_t>();
    o.train_seconds = f.at("train_seconds").get<double>();
    r.outcomes.push_back(o);
  }
  summarize(r);
  r.tensorize_seconds = j.value("tensorize_seconds", 0.0);
  r.cache_warm = j.value("cache_warm", true);
  r.version = j.value("version", std::string());
  r.warnings = j.value("warnings", std::vector<std::string>());
  return r;
}

inline ExperimentResult load_result(std::filesystem::path const& dir) {
  return result_from_json(nlohmann::json::parse(read_text(dir / "result.json")));
}

/// Fold table without timings, so reruns of a manifest compare byte for byte.
inline std::string folds_csv(ExperimentResult const& r) {
  std::ostringstream os;
  os << "dataset,fold,n_train,n_test,correct,accuracy\n";
  os.precision(17);
  for (auto const& o : r.outcomes) {
    os << o.member << ',' << o.fold << ',' << o.n_train << ',' << o.n_test << ',' << o.correct << ','
       << o.accuracy() << '\n';
  }
  return os.str();
}

inline std::string timings_csv(ExperimentResult const& r) {
  std::ostringstream os;
  os << "dataset,fold,train_seconds,resumed\n";
  os.precision(6);
  for (auto const& o : r.outcomes) {
    os << o.member << ',' << o.fold << ',' << std::fixed << o.train_seconds << ',' << (o.resumed ? 1 : 0) << '\n';
  }
  os << "# tensorize_seconds=" << r.tensorize_seconds << " cache=" << (r.cache_warm ? "warm" : "cold")
     << " (train times exclude tensorization)\n";
  return os.str();
}

namespace detail {

inline std::string fold_stem(std::string const& member, std::size_t fold) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu", fold);
  return member + "_fold" + buf;
}

template <typename Model>
FoldOutcome train_and_score(Model model, TensorSet const& data, FoldSplit const& split, std::size_t fold,
                            models::TrainConfig const& tcfg, std::filesystem::path const& trace_file) {
  auto const train_idx = split.train_indices(fold);
  auto const& test_idx = split.folds[fold];
  auto const tr = models::train(model, data, train_idx, tcfg);
  auto const predicted = models::predict_all(model, data, test_idx);
  FoldOutcome o;
  o.fold = fold;
  o.n_train = train_idx.size();
  o.n_test = test_idx.size();
  for (std::size_t i = 0; i < test_idx.size(); ++i) o.correct += predicted[i] == data.labels[test_idx[i]];
  o.train_seconds = tr.seconds;
  if (!trace_file.empty()) {
    std::ostringstream os;
    models::write_loss_trace(os, tr.trace);
    write_text_atomic(trace_file, os.str());
  }
  return o;
}

}  // namespace detail

/// Trains and scores one fold with the model selected by `cfg`.
inline FoldOutcome run_fold(ExperimentConfig const& cfg, TensorSet const& data, FoldSplit const& split,
                            std::size_t fold, std::size_t cell, std::filesystem::path const& trace_file = {}) {
  auto const w = static_cast<std::size_t>(data.width);
  auto const k = static_cast<std::size_t>(data.field_size);
  auto const c = static_cast<std::size_t>(data.num_classes);
  auto const tcfg = train_config(cfg, fold_training_seed(cfg.seed, fold, cell));
  if (cfg.model == ModelKind::Capsules) {
    return detail::train_and_score(models::CapsNet(w, k, data.channels(), c, capsnet_config(cfg, c)), data, split,
                                   fold, tcfg, trace_file);
  }
  return detail::train_and_score(models::Cnn(w, k, data.channels(), c, cnn_config(cfg)), data, split, fold, tcfg,
                                 trace_file);
}

/// Manifest for a run: resolved config, derived seeds, dataset checksums and
/// version, plus the invocation that produced it.
inline nlohmann::ordered_json make_manifest(ExperimentConfig const& cfg, std::vector<PreparedData> const& data,
                                            RunOptions const& opt) {
  nlohmann::ordered_json fold_seeds = nlohmann::ordered_json::array();
  for (std::size_t f = 0; f < cfg.folds; ++f) fold_seeds.push_back(fold_training_seed(cfg.seed, f, opt.cell));
  nlohmann::ordered_json datasets = nlohmann::ordered_json::object();
  for (auto const& d : data) {
    datasets[d.name] = {{"graphs", d.tensors.size()},
                        {"width", d.tensors.width},
                        {"field_size", d.tensors.field_size},
                        {"label_alphabet_size", d.tensors.label_alphabet_size},
                        {"files", d.checksums}};
  }
  return {{"config", to_json(cfg)},
          {"effective", {{"epochs", effective_epochs(cfg)}}},
          {"seeds",
           {{"run", cfg.seed},
            {"permutation", permutation_seed(cfg.seed)},
            {"fold_assignment", fold_assignment_seed(cfg.seed)},
            {"cell", opt.cell},
            {"fold_training", fold_seeds}}},
          {"datasets", datasets},
          {"version", version_stamp()},
          {"command_line", opt.command_line},
          {"created", utc_timestamp()}};
}

/// k-fold cross-validation of one configuration.
///
/// Node ids are permuted once per dataset before tensorization. Folds run on
/// up to `opt.jobs` threads, each with its own model and derived seed, and are
/// merged by index, so the result does not depend on the thread count. With
/// an output directory, each finished fold is persisted immediately and a
/// rerun of the same manifest skips the folds already on disk.
inline ExperimentResult run_cv(ExperimentConfig const& cfg, RunOptions const& opt = {}) {
  cfg.validate();
  auto log = [&](std::string const& msg) {
    if (opt.log) opt.log(msg);
  };
  ExperimentResult result;
  result.config = cfg;
  result.members = dataset_members(cfg.dataset);

  std::vector<PreparedData> data;
  std::vector<FoldSplit> splits;
  for (auto const& member : result.members) {
    data.push_back(prepare_dataset(cfg, member, opt));
    auto const& d = data.back();
    log(member + ": " + std::to_string(d.tensors.size()) + " graphs, " + std::to_string(d.tensors.padded_anchors) +
        " padded anchors, cache " + (d.cache_warm ? "warm" : "cold") + " (" + d.cache_file.string() + ")");
    result.tensorize_seconds += d.tensorize_seconds;
    result.cache_warm = result.cache_warm && d.cache_warm;
    splits.push_back(kfold_split(d.tensors.size(), cfg.folds, fold_assignment_seed(cfg.seed), d.tensors.labels));
    for (auto const& w : splits.back().warnings) result.warnings.push_back(member + ": " + w);
  }
  for (auto const& w : result.warnings) log("warning: " + w);

  std::string const fingerprint = hex64(fnv1a64(to_json(cfg).dump() + version_stamp() + std::to_string(opt.cell)));
  if (!opt.out_dir.empty()) write_manifest(opt.out_dir, make_manifest(cfg, data, opt));

  struct Job {
    std::size_t member;
    std::size_t fold;
  };
  std::vector<Job> jobs;
  for (std::size_t m = 0; m < data.size(); ++m) {
    for (std::size_t f = 0; f < cfg.folds; ++f) jobs.push_back({m, f});
  }
  result.outcomes.resize(jobs.size());

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr failure;
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size() && !failed; j = next++) {
      try {
        auto const [m, f] = jobs[j];
        auto const& member = data[m].name;
        auto const stem = detail::fold_stem(member, f);
        std::filesystem::path partial, trace;
        if (!opt.out_dir.empty()) {
          partial = opt.out_dir / "partial" / (stem + ".json");
          trace = opt.out_dir / "traces" / (stem + ".csv");
        }
        FoldOutcome o;
        bool resumed = false;
        if (!partial.empty() && std::filesystem::exists(partial)) {
          auto const p = nlohmann::json::parse(read_text(partial));
          if (p.value("fingerprint", std::string()) == fingerprint) {
            o.n_train = p.at("n_train").get<std::size_t>();
            o.n_test = p.at("n_test").get<std::size_t>();
            o.correct = p.at("correct").get<std::size_t>();
            o.train_seconds = p.at("train_seconds").get<double>();
            o.fold = f;
            o.resumed = resumed = true;
          }
        }
        if (!resumed) {
          o = run_fold(cfg, data[m].tensors, splits[m], f, opt.cell, trace);
          if (!partial.empty()) {
            nlohmann::ordered_json p{{"fingerprint", fingerprint}, {"n_train", o.n_train},
                                     {"n_test", o.n_test},           {"correct", o.correct},
                                     {"train_seconds", o.train_seconds}};
            write_text_atomic(partial, p.dump(2) + "\n");
          }
        }
        o.member = member;
        result.outcomes[j] = o;
        std::lock_guard lock(log_mutex);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s fold %zu/%zu: accuracy %.4f (%zu/%zu), %.1f s%s", member.c_str(), f + 1,
                      cfg.folds, o.accuracy(), o.correct, o.n_test, o.train_seconds, resumed ? ", resumed" : "");
        log(buf);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  unsigned const threads = std::max(1u, std::min<unsigned>(opt.jobs, static_cast<unsigned>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  summarize(result);
  if (!opt.out_dir.empty()) {
    write_text_atomic(opt.out_dir / "folds.csv", folds_csv(result));
    write_text_atomic(opt.out_dir / "timings.csv", timings_csv(result));
    write_text_atomic(opt.out_dir / "result.json", to_json(result).dump(2) + "\n");
  }
  return result;
}

/// Default results sub-directory name for a configuration.
inline std::string default_run_id(ExperimentConfig const& cfg) {
  std::string id = cfg.dataset + "_" + std::string(to_string(cfg.labelling)) + (cfg.naive_ties ? "-naive" : "") + "_" +
                   std::string(to_string(cfg.model)) + "_" + cfg.preset + "_s" + std::to_string(cfg.seed);
  return id + "_" + hex64(fnv1a64(to_json(cfg).dump())).substr(0, 8);
}

}  // namespace graphcaps::experiment
