#pragma once

#include <cstdint>
#include <vector>

#include "mbgnn/common.hpp"
#include "mbgnn/matrix.hpp"

namespace mbgnn {

// Per-minibatch layered bipartite subgraph with contiguous local IDs.
//
// Local IDs are assigned seeds-first, then newly sampled vertices in
// first-encounter order, layer by layer. Because the vertex set only grows,
// the destination set of sampling layer k is exactly the local-ID prefix
// [0, layer_vertex_counts[k-1]), and activations at every network depth are
// row prefixes of one buffer.
struct SampledSubgraph {
  // Sampling layer k (1-based) stored at layers[k-1]. Edge (u, v) means v
  // aggregates the feature of sampled neighbor u. CSR is source-major
  // (row u lists destinations), CSC is the transpose (row v lists sources);
  // parallel edges from with-replacement sampling are kept.
  struct Layer {
    std::vector<std::uint32_t> csr_offsets;
    std::vector<std::uint32_t> csr_targets;
    std::vector<std::uint32_t> csc_offsets;
    std::vector<std::uint32_t> csc_sources;
    std::vector<std::uint32_t> dest_in_degree;

    std::uint32_t num_edges() const { return static_cast<std::uint32_t>(csr_targets.size()); }
  };

  std::uint32_t layer_count = 0;                   // sampling layers materialized
  std::vector<std::uint32_t> layer_vertex_counts;  // |D_0| (seeds) .. |D_layer_count|
  std::vector<VertexId> local_to_global;
  std::vector<Layer> layers;

  Matrix<float> features;          // one row per local vertex
  Matrix<float> cached_aggregate;  // cache plan only; rows for every local vertex
  std::vector<std::int32_t> labels;          // seed rows
  std::vector<std::uint32_t> global_degrees; // per local vertex, sampling direction

  std::uint32_t num_local_vertices() const { return static_cast<std::uint32_t>(local_to_global.size()); }
  std::uint32_t num_seeds() const { return layer_vertex_counts.empty() ? 0 : layer_vertex_counts[0]; }
  std::uint64_t total_edges() const {
    std::uint64_t n = 0;
    for (const auto& l : layers) n += l.num_edges();
    return n;
  }

  bool topology_equals(const SampledSubgraph& o) const {
    if (layer_count != o.layer_count || layer_vertex_counts != o.layer_vertex_counts ||
        local_to_global != o.local_to_global || layers.size() != o.layers.size())
      return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].csr_offsets != o.layers[i].csr_offsets ||
          layers[i].csr_targets != o.layers[i].csr_targets ||
          layers[i].csc_offsets != o.layers[i].csc_offsets ||
          layers[i].csc_sources != o.layers[i].csc_sources ||
          layers[i].dest_in_degree != o.layers[i].dest_in_degree)
        return false;
    }
    return true;
  }

  bool bit_equals(const SampledSubgraph& o) const {
    return topology_equals(o) && labels == o.labels && global_degrees == o.global_degrees &&
           features.rows == o.features.rows && features.cols == o.features.cols &&
           std::memcmp(features.data.data(), o.features.data.data(),
                       features.data.size() * sizeof(float)) == 0 &&
           cached_aggregate.rows == o.cached_aggregate.rows &&
           cached_aggregate.cols == o.cached_aggregate.cols &&
           std::memcmp(cached_aggregate.data.data(), o.cached_aggregate.data.data(),
                       cached_aggregate.data.size() * sizeof(float)) == 0;
  }
};

}  // namespace mbgnn
