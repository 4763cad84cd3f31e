#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "graphcaps/graphcaps.hpp"

namespace fs = std::filesystem;
namespace ga = graphcaps::analysis;
namespace ge = graphcaps::experiment;
namespace gm = graphcaps::models;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Raw option values; resolved into an ExperimentConfig after parsing.
struct ExperimentArgs {
  ge::ExperimentConfig cfg;
  std::string labelling = "bc";
  std::string model = "capsules";
};

struct CommonArgs {
  std::string data;
  std::string cache = "cache";
  std::string results = "results";
  std::string run_id;
  std::string config;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  bool force = false;
  bool quiet = false;
};

void add_data_options(CLI::App* app, ExperimentArgs& e, CommonArgs& c) {
  app->add_option("--config", c.config, "Config file, one `key = value` per line (keys are long option names); flags take precedence")
      ->check(CLI::ExistingFile);
  app->add_option("--dataset", e.cfg.dataset, "TU dataset name (PTC averages PTC_MM/FM/MR/FR)")
      ->capture_default_str();
  app->add_option("--labelling", e.labelling, "Node labelling procedure")
      ->check(CLI::IsMember({"bc", "betweenness", "canonical", "nauty"}))
      ->capture_default_str();
  app->add_flag("--naive-ties", e.cfg.naive_ties, "Break selection ties by node index (not isomorphism-invariant)");
  app->add_option("--width", e.cfg.width, "Anchor nodes per graph; 0 uses the rounded average graph size")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--field-size", e.cfg.field_size, "Receptive field size k")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--seed", e.cfg.seed, "Run seed (node-id permutation, folds, training)")->capture_default_str();
  app->add_option("--data", c.data, "Data root; falls back to $GRAPHCAPS_DATA, then ./data");
  app->add_option("--cache", c.cache, "Tensor cache directory")->capture_default_str();
  app->add_option("--jobs", c.jobs, "Worker threads for folds and tensorization")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_flag("--force", c.force, "Recompute instead of reusing cached or partial results");
  app->add_flag("-q,--quiet", c.quiet, "No progress messages");
}

void add_training_options(CLI::App* app, ExperimentArgs& e, CommonArgs& c) {
  app->add_option("--model", e.model, "Classifier")->check(CLI::IsMember({"capsules", "cnn"}))->capture_default_str();
  app->add_option("--preset", e.cfg.preset, "Architecture and epoch budget")
      ->check(CLI::IsMember({"paper", "small"}))
      ->capture_default_str();
  app->add_option("--epochs", e.cfg.epochs, "Training epochs; 0 uses the preset default")->capture_default_str();
  app->add_option("--batch-size", e.cfg.batch_size, "Mini-batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--lr", e.cfg.base_lr, "Base learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--lr-decay", e.cfg.lr_decay, "Decay exponent: lr = base * exp(-decay * epoch)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--min-lr", e.cfg.min_lr, "Floor of the decayed learning rate")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app->add_option("--lambda", e.cfg.lambda, "Down-weighting of absent-class margin terms")->capture_default_str();
  app->add_option("--alpha", e.cfg.alpha, "Weight of the reconstruction loss")->capture_default_str();
  app->add_option("--routing-iters", e.cfg.routing_iters, "Dynamic routing iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--loss", e.cfg.loss, "Capsule classification loss; auto is binary_ce for 2 classes")
      ->check(CLI::IsMember({"auto", "margin", "binary_ce"}))
      ->capture_default_str();
  app->add_option("--folds", e.cfg.folds, "Cross-validation folds")->check(CLI::Range(2, 1000))->capture_default_str();
  app->add_option("--tuned-on", e.cfg.tuned_on, "Dataset the hyper-parameters were tuned on")->capture_default_str();
  app->add_option("--results", c.results, "Results root")->capture_default_str();
  app->add_option("--run-id", c.run_id, "Results sub-directory; derived from the config by default");
}

ge::ExperimentConfig resolve(ExperimentArgs const& e) {
  auto cfg = e.cfg;
  cfg.labelling = graphcaps::parse_labelling(e.labelling);
  cfg.model = ge::parse_model(e.model);
  cfg.validate();
  return cfg;
}

ge::RunOptions run_options(CommonArgs const& c, std::string const& command_line) {
  ge::RunOptions o;
  o.data_root = ge::resolve_data_root(c.data);
  o.cache_dir = c.cache;
  o.jobs = c.jobs;
  o.command_line = command_line;
  if (!c.quiet) o.log = [](std::string const& msg) { std::cerr << msg << std::endl; };
  return o;
}

fs::path results_dir(CommonArgs const& c, std::string const& default_id) {
  auto dir = fs::path(c.results) / (c.run_id.empty() ? default_id : c.run_id);
  if (c.force && fs::exists(dir)) fs::remove_all(dir);
  return dir;
}

int cmd_tensorize(ExperimentArgs const& e, CommonArgs const& c, std::string const& command_line) {
  auto const cfg = resolve(e);
  auto opt = run_options(c, command_line);
  opt.rebuild_cache = c.force;
  for (auto const& member : graphcaps::dataset_members(cfg.dataset)) {
    auto const p = ge::prepare_dataset(cfg, member, opt);
    std::cout << p.cache_file.string() << ": " << p.tensors.size() << " tensors of shape "
              << graphcaps::to_string(p.tensors.sample_shape()) << ", " << p.tensors.padded_anchors << " padded anchors"
              << (p.cache_warm ? " (cache up to date, nothing to do)" : " (written)") << '\n';
  }
  return 0;
}

int cmd_run(ExperimentArgs const& e, CommonArgs const& c, std::string const& command_line) {
  auto const cfg = resolve(e);
  auto opt = run_options(c, command_line);
  opt.out_dir = results_dir(c, ge::default_run_id(cfg));
  auto const r = ge::run_cv(cfg, opt);
  ge::emit_report({r}, opt.out_dir);
  std::cout << ge::read_text(opt.out_dir / "report.txt") << "results: " << opt.out_dir.string() << '\n';
  return 0;
}

struct GridArgs {
  std::vector<std::size_t> epochs = ge::GridSpec::paper().epochs;
  std::vector<double> lrs = ge::GridSpec::paper().base_lr;
  std::vector<double> decays = ge::GridSpec::paper().lr_decay;
};

int cmd_grid(ExperimentArgs const& e, CommonArgs const& c, GridArgs const& g, std::string const& command_line) {
  auto const cfg = resolve(e);
  auto opt = run_options(c, command_line);
  opt.out_dir = results_dir(c, "grid_" + ge::default_run_id(cfg));
  auto const r = ge::grid_search(cfg, {g.epochs, g.lrs, g.decays}, opt);
  ge::write_text_atomic(opt.out_dir / "best.json", ge::to_json(r.best_config).dump(2) + "\n");
  auto const& best = r.cells[r.best];
  std::cout << ge::grid_csv(r) << "best: epochs=" << best.epochs << " lr=" << best.base_lr
            << " lr_decay=" << best.lr_decay << " mean=" << best.mean << "\nresults: " << opt.out_dir.string()
            << '\n';
  return 0;
}

struct EmbedArgs {
  std::vector<std::string> sources{"raw"};
  double perplexity = 10.0;
  std::size_t iterations = 1000;
  std::uint64_t tsne_seed = 1;
};

int cmd_embed(ExperimentArgs const& e, CommonArgs const& c, EmbedArgs const& a, std::string const& command_line) {
  auto const cfg = resolve(e);
  auto opt = run_options(c, command_line);
  auto const members = graphcaps::dataset_members(cfg.dataset);
  if (members.size() != 1) throw graphcaps::ConfigError("embed works on a single dataset, not the group " + cfg.dataset);
  auto const data = ge::prepare_dataset(cfg, members[0], opt);
  auto const& set = data.tensors;
  auto const out = results_dir(c, "embed_" + ge::default_run_id(cfg));
  std::vector<std::size_t> all(set.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto const w = static_cast<std::size_t>(set.width), k = static_cast<std::size_t>(set.field_size);
  auto const classes = static_cast<std::size_t>(set.num_classes);
  auto const tcfg = ge::train_config(cfg, ge::fold_training_seed(cfg.seed, 0, 0));

  std::string embeddings = "source,graph_id,class,x,y\n";
  std::string header;
  std::vector<std::pair<ga::EmbeddingSource, ga::ClusterDistances>> distances;
  for (auto const& name : a.sources) {
    auto const source = ga::parse_source(name);
    ga::EmbeddingSet points;
    if (source == ga::EmbeddingSource::RawTensor) {
      points = ga::raw_embeddings(set);
    } else if (source == ga::EmbeddingSource::CnnInner) {
      gm::Cnn model(w, k, set.channels(), classes, ge::cnn_config(cfg));
      if (opt.log) opt.log("training CNN on all " + std::to_string(set.size()) + " graphs");
      gm::train(model, set, all, tcfg);
      graphcaps::nn::save_checkpoint(out / "cnn.ckpt", model.parameters(), ge::to_json(cfg).dump());
      points = ga::extract_embeddings(model, set, source);
    } else {
      gm::CapsNet model(w, k, set.channels(), classes, ge::capsnet_config(cfg, classes));
      if (opt.log) opt.log("training capsule network on all " + std::to_string(set.size()) + " graphs");
      gm::train(model, set, all, tcfg);
      graphcaps::nn::save_checkpoint(out / "capsules.ckpt", model.parameters(), ge::to_json(cfg).dump());
      points = ga::extract_embeddings(model, set, source);
    }
    ga::TsneConfig tc;
    tc.perplexity = a.perplexity;
    tc.iterations = a.iterations;
    tc.seed = a.tsne_seed;
    if (opt.log) opt.log("t-SNE on " + std::to_string(points.points.rows()) + " x " +
                         std::to_string(points.points.cols()) + " (" + name + ")");
    auto const t = ga::tsne(points.points, tc);
    auto const csv = ga::embeddings_csv(points, t);
    // Keep the provenance comments, prefix data rows with the source.
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
      if (line.starts_with("#")) {
        header += line + "\n";
      } else if (!line.starts_with("graph_id")) {
        embeddings += name + "," + line + "\n";
      }
    }
    distances.emplace_back(source, ga::cluster_distances(t.coords, points.labels, set.num_classes));
  }
  ge::write_text_atomic(out / "embeddings.csv", header + embeddings);
  ge::write_text_atomic(out / "distances.csv", ga::distances_csv(distances));
  std::cout << ga::distances_csv(distances) << "results: " << out.string() << '\n';
  return 0;
}

int cmd_report(std::vector<std::string> const& dirs, std::string const& out) {
  std::vector<ge::ExperimentResult> results;
  for (auto const& d : dirs) {
    if (fs::exists(fs::path(d) / "result.json")) {
      results.push_back(ge::load_result(d));
      continue;
    }
    std::vector<fs::path> found;
    if (fs::is_directory(d)) {
      for (auto const& entry : fs::recursive_directory_iterator(d)) {
        if (entry.path().filename() == "result.json") found.push_back(entry.path().parent_path());
      }
    }
    if (found.empty()) throw graphcaps::IoError("no result.json under " + d);
    std::sort(found.begin(), found.end());
    for (auto const& f : found) results.push_back(ge::load_result(f));
  }
  ge::emit_report(results, out);
  std::cout << ge::read_text(fs::path(out) / "report.txt");
  return 0;
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

/// Expands `--config FILE` into long options placed before the user's own
/// arguments. Keys already given on the command line are skipped, so flags
/// win; `[section]` tables only apply to the subcommand of that name.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) file = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
  }
  if (file.empty() || args.empty() || !fs::is_regular_file(file)) return args;
  auto given = [&](std::string const& name) {
    return std::any_of(args.begin(), args.end(), [&](std::string const& a) {
      return a == "--" + name || a.rfind("--" + name + "=", 0) == 0;
    });
  };
  std::vector<std::string> extra;
  for (auto const& item : CLI::ConfigTOML().from_file(file)) {
    if (item.name.empty() || item.name == "++" || item.name == "--" || given(item.name)) continue;
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == args[0])) continue;
    for (auto const& value : item.inputs) extra.push_back("--" + item.name + "=" + value);
  }
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graphcaps: graph classification with capsule networks on tensorized receptive fields"};
  app.set_version_flag("--version", ge::version_stamp());
  app.require_subcommand(1);

  ExperimentArgs e;
  CommonArgs c;
  GridArgs g;
  EmbedArgs emb;
  std::vector<std::string> report_dirs;
  std::string report_out = "results/report";

  auto* tensorize = app.add_subcommand("tensorize", "Tensorize a dataset into the cache");
  add_data_options(tensorize, e, c);

  auto* run = app.add_subcommand("run", "k-fold cross-validation of one configuration");
  add_data_options(run, e, c);
  add_training_options(run, e, c);

  auto* grid = app.add_subcommand("grid", "Grid search over epochs, learning rate and decay");
  add_data_options(grid, e, c);
  add_training_options(grid, e, c);
  grid->add_option("--grid-epochs", g.epochs, "Epoch values")->capture_default_str();
  grid->add_option("--grid-lr", g.lrs, "Learning-rate values")->capture_default_str();
  grid->add_option("--grid-decay", g.decays, "Decay values")->capture_default_str();

  auto* embed = app.add_subcommand("embed", "t-SNE of raw tensors or learned layers, plus cluster distances");
  add_data_options(embed, e, c);
  add_training_options(embed, e, c);
  embed->add_option("--source", emb.sources, "Layers to embed: raw, cnn, caps")
      ->check(CLI::IsMember({"raw", "cnn", "caps"}))
      ->capture_default_str();
  embed->add_option("--perplexity", emb.perplexity, "t-SNE perplexity")->capture_default_str();
  embed->add_option("--tsne-iters", emb.iterations, "t-SNE iterations")->capture_default_str();
  embed->add_option("--tsne-seed", emb.tsne_seed, "t-SNE initialisation seed")->capture_default_str();

  auto* report = app.add_subcommand("report", "Combine finished runs into one table");
  report->add_option("dirs", report_dirs, "Run directories (searched recursively for result.json)")->required();
  report->add_option("--out", report_out, "Output directory")->capture_default_str();

  auto* selftest = app.add_subcommand("selftest", "Run the built-in consistency suites");

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (CLI::CallForHelp const& err) {
    return app.exit(err);
  } catch (CLI::CallForAllHelp const& err) {
    return app.exit(err);
  } catch (CLI::CallForVersion const& err) {
    return app.exit(err);
  } catch (CLI::ParseError const& err) {
    std::cerr << "error: " << err.what() << "\n\n";
    CLI::App const* sub = &app;
    for (auto* s : app.get_subcommands()) sub = s;
    std::cerr << sub->help();
    return kExitUsage;
  }

  auto const command_line = join_args(argc, argv);
  try {
    if (*tensorize) return cmd_tensorize(e, c, command_line);
    if (*run) return cmd_run(e, c, command_line);
    if (*grid) return cmd_grid(e, c, g, command_line);
    if (*embed) return cmd_embed(e, c, emb, command_line);
    if (*report) return cmd_report(report_dirs, report_out);
    if (*selftest) return graphcaps::selftest::run_all(std::cout) ? 0 : kExitRuntime;
  } catch (graphcaps::ConfigError const& err) {
    std::cerr << "configuration error: " << err.what() << '\n';
    return kExitRuntime;
  } catch (std::exception const& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
