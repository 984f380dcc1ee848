#include "mbgnn/sbm.hpp"

#include <filesystem>
#include <fstream>

#include "mbgnn/rng.hpp"

namespace mbgnn {

namespace {

std::vector<std::pair<VertexId, VertexId>> sample_pairs(const SbmSpec& spec,
                                                        const std::vector<std::uint32_t>& block) {
  const std::uint32_t n = spec.num_vertices();
  RngStream rng({spec.seed, rng_domain::kSbm, 1});
  std::vector<std::pair<VertexId, VertexId>> edges;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = i + 1; j < n; ++j) {
      const double p = block[i] == block[j] ? spec.p_intra : spec.p_inter;
      // Keyed by the pair index so the draw order is immaterial.
      const std::uint64_t pair_idx = static_cast<std::uint64_t>(i) * n + j;
      const double u = static_cast<double>(rng.at(pair_idx) >> 11) * 0x1.0p-53;
      if (u < p) edges.emplace_back(i, j);
    }
  }
  return edges;
}

}  // namespace

Dataset generate_sbm(const SbmSpec& spec) {
  if (spec.block_sizes.empty()) throw ConfigError("sbm: need at least one block");
  if (spec.p_intra < 0 || spec.p_intra > 1 || spec.p_inter < 0 || spec.p_inter > 1)
    throw ConfigError("sbm: probabilities must be in [0, 1]");
  if (spec.train_fraction <= 0 || spec.train_fraction >= 1)
    throw ConfigError("sbm: train_fraction must be in (0, 1)");
  const std::uint32_t n = spec.num_vertices();

  std::vector<std::uint32_t> block(n);
  {
    std::uint32_t at = 0;
    for (std::uint32_t b = 0; b < spec.num_blocks(); ++b)
      for (std::uint32_t k = 0; k < spec.block_sizes[b]; ++k) block[at++] = b;
  }

  const auto pairs = sample_pairs(spec, block);
  Graph g = make_undirected(build_graph(n, pairs));

  const std::uint32_t dim = spec.feature_dim();
  Matrix<float> features(n, dim);
  for (std::uint32_t v = 0; v < n; ++v) {
    RngStream rng({spec.seed, rng_domain::kSbm, 2, v});
    float* row = features.row(v);
    for (std::uint32_t c = 0; c < dim; ++c)
      row[c] = static_cast<float>(spec.noise_stddev * rng.next_normal());
    row[block[v]] += 1.0f;
  }

  std::vector<std::int32_t> labels(block.begin(), block.end());

  std::vector<VertexId> perm(n);
  for (std::uint32_t v = 0; v < n; ++v) perm[v] = v;
  shuffle_with_key(perm, rng_key({spec.seed, rng_domain::kSbm, 3}));
  const std::uint32_t n_train = static_cast<std::uint32_t>(spec.train_fraction * n);
  std::vector<std::uint8_t> train_mask(n, 0), test_mask(n, 0);
  for (std::uint32_t i = 0; i < n; ++i)
    (i < n_train ? train_mask : test_mask)[perm[i]] = 1;

  attach_features(g, std::move(features), std::move(labels), std::move(train_mask),
                  std::move(test_mask));
  return {std::move(g), spec.num_blocks()};
}

void write_dataset(const Dataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const Graph& g = data.graph;

  std::ofstream edges(dir + "/graph.txt");
  if (!edges) throw IoError("cannot write " + dir + "/graph.txt");
  for (VertexId v = 0; v < g.num_vertices; ++v) {
    for (VertexId t : g.out_neighbors(v)) {
      if (v < t) edges << v << ' ' << t << '\n';  // each undirected edge once
    }
  }
  if (!edges) throw IoError("write failed: " + dir + "/graph.txt");

  save_feature_file(dir + "/features.bin", g.features);
  save_label_file(dir + "/labels.bin", g.labels);
  save_mask_file(dir + "/train_mask.bin", g.train_mask);
  save_mask_file(dir + "/test_mask.bin", g.test_mask);

  std::ofstream meta(dir + "/meta.txt");
  meta << "num_vertices=" << g.num_vertices << "\n";
  meta << "feature_dim=" << g.feature_dim << "\n";
  meta << "num_classes=" << data.num_classes << "\n";
  if (!meta) throw IoError("write failed: " + dir + "/meta.txt");
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream meta(dir + "/meta.txt");
  if (!meta) throw IoError("cannot open " + dir + "/meta.txt");
  VertexId n = 0;
  std::uint32_t classes = 0;
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "num_vertices") n = static_cast<VertexId>(std::stoul(val));
    if (key == "num_classes") classes = static_cast<std::uint32_t>(std::stoul(val));
  }
  if (n == 0) throw ParseError(dir + "/meta.txt: missing num_vertices");

  Graph g = make_undirected(load_edge_list(dir + "/graph.txt", n));
  attach_features(g, load_feature_file(dir + "/features.bin"), load_label_file(dir + "/labels.bin"),
                  load_mask_file(dir + "/train_mask.bin"), load_mask_file(dir + "/test_mask.bin"));
  if (classes == 0) {
    for (auto l : g.labels) classes = std::max(classes, static_cast<std::uint32_t>(l + 1));
  }
  return {std::move(g), classes};
}

}  // namespace mbgnn
