// Tensorizes a TU dataset with betweenness labelling, lays the raw graph
// tensors out in 2-D with exact t-SNE and prints the class spread.
//
//   mutag_layout [data_root] [dataset]

#include <cstdio>
#include <iostream>
#include <string>

#include "graphcaps/graphcaps.hpp"

int main(int argc, char** argv) {
  using namespace graphcaps;
  std::string const root = argc > 1 ? argv[1] : "data";
  std::string const name = argc > 2 ? argv[2] : "MUTAG";
  try {
    auto const ds = permute_dataset(load_tu_dataset(root, name), 1);
    TensorizerOptions opts;
    opts.procedure = LabellingProcedure::BetweennessCentrality;
    auto const set = tensorize_dataset(ds, opts);
    std::printf("%s: %zu graphs, tensors %d x %d x %d\n", name.c_str(), set.size(), set.width, set.field_size,
                set.label_alphabet_size + 1);

    auto const raw = analysis::raw_embeddings(set);
    analysis::TsneConfig cfg;
    cfg.perplexity = 20.0;
    auto const layout = analysis::tsne(raw.points, cfg);
    std::printf("t-SNE KL %.4f -> %.4f\n", layout.initial_kl, layout.final_kl);

    for (auto const& [what, pts] : {std::pair{"tensor space", raw.points}, std::pair{"t-SNE plane", layout.coords}}) {
      auto const d = analysis::cluster_distances(pts, raw.labels, ds.num_classes);
      std::printf("%-12s  pooled intra %.3f", what, d.pooled_intra);
      for (std::size_t c = 0; c < d.classes.size(); ++c) std::printf("  class %d %.3f", d.classes[c], d.intra[c]);
      if (d.inter) std::printf("  inter %.3f", *d.inter);
      std::printf("\n");
    }
  } catch (std::exception const& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
