#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mbgnn/graph.hpp"
#include "mbgnn/matrix.hpp"

namespace mbgnn {

enum class OwnerPolicy { kModulo, kSeededHash };

enum class SamplingDirection { kOut, kIn };

struct PartitionPolicy {
  OwnerPolicy kind = OwnerPolicy::kSeededHash;
  std::uint64_t seed = 0;
  SamplingDirection direction = SamplingDirection::kOut;

  // Pure function of (v, num_ranks, policy): every rank computes identical
  // answers with no communication.
  int owner_of(VertexId v, int num_ranks) const;
};

// One rank's share of an edge-cut partition: the owned vertices, ALL their
// adjacency in the sampling direction, and their feature/label/mask rows.
// Immutable once built; holds no reference to the global graph so everything
// non-owned must come through the fabric.
struct Partition {
  int rank = 0;
  int num_ranks = 1;
  VertexId num_global_vertices = 0;
  PartitionPolicy policy;

  std::vector<VertexId> owned_vertices;  // ascending global IDs
  std::vector<EdgeIndex> local_adj_offsets;  // over owned vertices, sampling direction
  std::vector<VertexId> local_adj_targets;   // global IDs, global adjacency order preserved

  Matrix<float> local_features;
  std::vector<std::int32_t> local_labels;
  std::vector<std::uint8_t> local_train_mask;
  std::vector<std::uint8_t> local_test_mask;

  std::unordered_map<VertexId, std::uint32_t> g2l;

  // Replicated global metadata: degree per vertex in the sampling direction
  // (GCN normalization, cache coefficients) and per-rank train/test counts
  // (lockstep step-count agreement). Pure functions of the input, identical
  // on every rank.
  std::vector<std::uint32_t> global_degrees;
  std::vector<std::uint32_t> train_count_per_rank;
  std::vector<std::uint32_t> test_count_per_rank;

  int owner_of(VertexId v) const { return policy.owner_of(v, num_ranks); }
  bool owns(VertexId v) const { return owner_of(v) == rank; }
  std::uint32_t num_owned() const { return static_cast<std::uint32_t>(owned_vertices.size()); }
  std::uint32_t local_index(VertexId v) const;
  std::span<const VertexId> local_neighbors(std::uint32_t local) const {
    return {local_adj_targets.data() + local_adj_offsets[local],
            local_adj_targets.data() + local_adj_offsets[local + 1]};
  }
  bool has_features() const { return local_features.rows == owned_vertices.size(); }
};

// Single-pass assignment: each rank scans the full input and keeps the
// vertices the policy maps to it, preserving global adjacency order per
// vertex. No refinement.
Partition partition_graph(const Graph& g, int rank, int num_ranks, const PartitionPolicy& policy);

// Copies feature/label/mask rows of owned vertices into the partition,
// bit-identical to the global rows.
void scatter_features(const Graph& g, Partition& p);

// Debug dump (owned-ID list + local adjacency); documented, not load-bearing.
void dump_partition(const Partition& p, const std::string& path);

}  // namespace mbgnn
