#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mbgnn/common.hpp"
#include "mbgnn/matrix.hpp"
#include "mbgnn/subgraph.hpp"

namespace mbgnn {

// Immutable CSR(+CSC) graph with dense vertex features, labels and
// train/test masks. Construction is single-threaded; reads are safe from
// any number of threads.
struct Graph {
  VertexId num_vertices = 0;
  std::vector<EdgeIndex> csr_offsets;  // length num_vertices + 1
  std::vector<VertexId> csr_targets;
  std::vector<EdgeIndex> csc_offsets;
  std::vector<VertexId> csc_sources;

  std::uint32_t feature_dim = 0;
  Matrix<float> features;  // num_vertices x feature_dim
  std::vector<std::int32_t> labels;
  std::vector<std::uint8_t> train_mask;
  std::vector<std::uint8_t> test_mask;

  EdgeIndex num_edges() const { return csr_targets.size(); }
  bool has_features() const { return features.rows == num_vertices && num_vertices > 0; }

  std::uint32_t out_degree(VertexId v) const {
    return static_cast<std::uint32_t>(csr_offsets[v + 1] - csr_offsets[v]);
  }
  std::uint32_t in_degree(VertexId v) const {
    return static_cast<std::uint32_t>(csc_offsets[v + 1] - csc_offsets[v]);
  }
  std::span<const VertexId> out_neighbors(VertexId v) const {
    return {csr_targets.data() + csr_offsets[v], csr_targets.data() + csr_offsets[v + 1]};
  }
  std::span<const VertexId> in_neighbors(VertexId v) const {
    return {csc_sources.data() + csc_offsets[v], csc_sources.data() + csc_offsets[v + 1]};
  }
};

// Builds a graph from an in-memory edge list. Edges keep their input order
// within each source row; CSC is the exact transpose (stable by target).
Graph build_graph(VertexId num_vertices, const std::vector<std::pair<VertexId, VertexId>>& edges);

// Reads whitespace-separated "src dst" pairs, one edge per line. Malformed
// lines and out-of-range IDs report the offending line number.
Graph load_edge_list(const std::string& path, VertexId num_vertices);

// Adds the reverse edge for every edge. Duplicates are kept, so the edge
// count exactly doubles.
Graph make_undirected(const Graph& g);

// Attaches feature rows, labels and masks. Masks must not overlap.
void attach_features(Graph& g, Matrix<float> features, std::vector<std::int32_t> labels,
                     std::vector<std::uint8_t> train_mask, std::vector<std::uint8_t> test_mask);

// Binary feature file: u32 rows, u32 cols, then rows*cols little-endian f32
// in row-major order.
Matrix<float> load_feature_file(const std::string& path);
void save_feature_file(const std::string& path, const Matrix<float>& m);

// u32 count followed by i32 entries.
std::vector<std::int32_t> load_label_file(const std::string& path);
void save_label_file(const std::string& path, const std::vector<std::int32_t>& labels);

// u32 count followed by u8 entries (0/1).
std::vector<std::uint8_t> load_mask_file(const std::string& path);
void save_mask_file(const std::string& path, const std::vector<std::uint8_t>& mask);

// Text export of a sampled subgraph:
//   line 1: "<num_local_vertices> <num_edges> <layer_count>"
//   one "src dst layer" line per edge (local IDs; layer-major, CSR order)
//   one "local global" line per local vertex.
// Output is byte-deterministic for a given subgraph.
void export_subgraph_coo(const SampledSubgraph& sg, const std::string& path);

// Parsed form of an exported subgraph file (round-trip checks, tooling).
struct CooSubgraph {
  std::uint32_t num_vertices = 0;
  std::uint32_t layer_count = 0;
  std::vector<std::uint32_t> src, dst, layer;
  std::vector<VertexId> local_to_global;
};
CooSubgraph load_subgraph_coo(const std::string& path);

}  // namespace mbgnn
