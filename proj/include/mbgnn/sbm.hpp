#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbgnn/graph.hpp"

namespace mbgnn {

// Stochastic-block-model generator spec. Features are a one-hot block
// indicator plus seeded Gaussian noise on every dimension; labels are the
// block IDs; the train/test split is an 80/20 cut of a seeded permutation.
struct SbmSpec {
  std::vector<std::uint32_t> block_sizes = {500, 500};
  double p_intra = 0.2;
  double p_inter = 0.01;
  std::uint32_t noise_dims = 6;
  double noise_stddev = 0.1;
  double train_fraction = 0.8;
  std::uint64_t seed = 7;

  std::uint32_t num_vertices() const {
    std::uint32_t n = 0;
    for (auto s : block_sizes) n += s;
    return n;
  }
  std::uint32_t num_blocks() const { return static_cast<std::uint32_t>(block_sizes.size()); }
  std::uint32_t feature_dim() const { return num_blocks() + noise_dims; }
};

struct Dataset {
  Graph graph;  // undirected, features attached
  std::uint32_t num_classes = 0;
};

// Deterministic for a fixed spec: every edge/feature draw is a pure function
// of (seed, index).
Dataset generate_sbm(const SbmSpec& spec);

// On-disk dataset layout under `dir`: graph.txt (each undirected edge once,
// "src dst", src < dst), features.bin, labels.bin, train_mask.bin,
// test_mask.bin, meta.txt (key=value).
void write_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace mbgnn
