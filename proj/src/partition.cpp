#include "mbgnn/partition.hpp"

#include <fstream>

#include "mbgnn/rng.hpp"

namespace mbgnn {

int PartitionPolicy::owner_of(VertexId v, int num_ranks) const {
  if (kind == OwnerPolicy::kModulo) return static_cast<int>(v % static_cast<VertexId>(num_ranks));
  return static_cast<int>(mix64(mix64(seed ^ rng_domain::kOwner) ^ v) %
                          static_cast<std::uint64_t>(num_ranks));
}

std::uint32_t Partition::local_index(VertexId v) const {
  auto it = g2l.find(v);
  if (it == g2l.end())
    throw BoundsError("vertex " + std::to_string(v) + " not owned by rank " + std::to_string(rank));
  return it->second;
}

Partition partition_graph(const Graph& g, int rank, int num_ranks, const PartitionPolicy& policy) {
  if (rank < 0 || rank >= num_ranks) throw ConfigError("rank out of range");
  Partition p;
  p.rank = rank;
  p.num_ranks = num_ranks;
  p.num_global_vertices = g.num_vertices;
  p.policy = policy;

  const bool out_dir = policy.direction == SamplingDirection::kOut;
  for (VertexId v = 0; v < g.num_vertices; ++v) {
    if (policy.owner_of(v, num_ranks) != rank) continue;
    p.g2l.emplace(v, static_cast<std::uint32_t>(p.owned_vertices.size()));
    p.owned_vertices.push_back(v);
  }

  p.local_adj_offsets.assign(p.owned_vertices.size() + 1, 0);
  for (std::uint32_t i = 0; i < p.owned_vertices.size(); ++i) {
    const VertexId v = p.owned_vertices[i];
    p.local_adj_offsets[i + 1] =
        p.local_adj_offsets[i] + (out_dir ? g.out_degree(v) : g.in_degree(v));
  }
  p.local_adj_targets.reserve(p.local_adj_offsets.back());
  for (std::uint32_t i = 0; i < p.owned_vertices.size(); ++i) {
    const VertexId v = p.owned_vertices[i];
    auto adj = out_dir ? g.out_neighbors(v) : g.in_neighbors(v);
    p.local_adj_targets.insert(p.local_adj_targets.end(), adj.begin(), adj.end());
  }

  p.global_degrees.resize(g.num_vertices);
  for (VertexId v = 0; v < g.num_vertices; ++v)
    p.global_degrees[v] = out_dir ? g.out_degree(v) : g.in_degree(v);

  p.train_count_per_rank.assign(num_ranks, 0);
  p.test_count_per_rank.assign(num_ranks, 0);
  if (!g.train_mask.empty()) {
    for (VertexId v = 0; v < g.num_vertices; ++v) {
      const int o = policy.owner_of(v, num_ranks);
      if (g.train_mask[v]) p.train_count_per_rank[o]++;
      if (!g.test_mask.empty() && g.test_mask[v]) p.test_count_per_rank[o]++;
    }
  }
  return p;
}

void scatter_features(const Graph& g, Partition& p) {
  if (!g.has_features()) throw ValidationError("scatter_features: graph has no attached features");
  const std::uint32_t n = p.num_owned();
  p.local_features.resize(n, g.feature_dim);
  p.local_labels.resize(n);
  p.local_train_mask.resize(n);
  p.local_test_mask.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const VertexId v = p.owned_vertices[i];
    std::memcpy(p.local_features.row(i), g.features.row(v), sizeof(float) * g.feature_dim);
    p.local_labels[i] = g.labels[v];
    p.local_train_mask[i] = g.train_mask[v];
    p.local_test_mask[i] = g.test_mask[v];
  }
}

void dump_partition(const Partition& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write partition dump: " + path);
  out << "rank " << p.rank << " of " << p.num_ranks << "\n";
  out << "owned " << p.num_owned() << "\n";
  for (std::uint32_t i = 0; i < p.num_owned(); ++i) {
    out << p.owned_vertices[i];
    for (VertexId t : p.local_neighbors(i)) out << ' ' << t;
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace mbgnn
