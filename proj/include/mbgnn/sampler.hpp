#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "mbgnn/agg_cache.hpp"
#include "mbgnn/fabric.hpp"
#include "mbgnn/partition.hpp"
#include "mbgnn/subgraph.hpp"

namespace mbgnn {

// Wire sizes of the pinned sampling/fetch encoding. The communication-model
// checks compute closed-form byte counts from these, so they are part of the
// artifact's contract (see README).
constexpr std::uint64_t kSampleRequestRecordBytes = 12;  // u64 rng key + u32 vertex
constexpr std::uint64_t kSampleResponseCountBytes = 4;   // u32 sample count per vertex
constexpr std::uint64_t kEdgeIdBytes = 4;                // u32 per sampled neighbor
constexpr std::uint64_t kFetchRequestIdBytes = 4;        // u32 per requested row

// Growing frontier of one minibatch. Local IDs are assigned seeds-first,
// then first-encounter order layer by layer, so the vertex list only grows
// and layer-k destinations are the prefix [0, layer_counts[k-1]).
struct MinibatchFrontier {
  std::vector<VertexId> locals;
  std::unordered_map<VertexId, std::uint32_t> g2l;
  std::vector<std::uint32_t> layer_counts;  // |D_0| .. |D_sampled|
  // sampled[k][j]: neighbors drawn for destination local id j at layer k+1.
  std::vector<std::vector<std::vector<VertexId>>> sampled;

  std::uint32_t num_seeds() const { return layer_counts.empty() ? 0 : layer_counts[0]; }
};

// B minibatches whose sampling and fetching share communication relays.
struct Macrobatch {
  std::uint32_t epoch = 0;
  std::uint32_t macrobatch_index = 0;
  std::uint32_t first_minibatch_index = 0;  // absolute index within the epoch
  std::uint32_t feature_round_width = 1;    // F
  std::uint64_t rng_domain_tag = 0;         // train vs eval stream separation
  SamplingPlan plan;
  std::vector<MinibatchFrontier> minibatches;

  std::uint32_t size() const { return static_cast<std::uint32_t>(minibatches.size()); }
  std::uint32_t num_feature_rounds() const {
    if (minibatches.empty()) return 0;
    return (size() + feature_round_width - 1) / feature_round_width;
  }
  // Minibatch index range [begin, end) of one feature round.
  std::pair<std::uint32_t, std::uint32_t> round_range(std::uint32_t round) const {
    const std::uint32_t b = round * feature_round_width;
    return {b, std::min(size(), b + feature_round_width)};
  }
};

// Rows fetched for one feature round, indexed by global vertex ID.
struct FeatureTable {
  Matrix<float> raw;
  Matrix<float> aggregate;  // only filled when the plan fetches aggregates
  std::unordered_map<VertexId, std::uint32_t> index;
  std::uint64_t union_size = 0;

  const float* raw_row(VertexId v) const;
  const float* aggregate_row(VertexId v) const;
};

// Shuffles the rank's owned training vertices with a permutation keyed on
// (rng_root, epoch, rank) and splits them into floor(n / minibatch_size)
// full minibatches; the remainder is dropped.
std::vector<std::vector<VertexId>> select_seeds(const Partition& p, std::uint32_t epoch,
                                                std::uint32_t minibatch_size,
                                                std::uint64_t rng_root);

// Seed lists must all be owned by this rank.
Macrobatch make_macrobatch(const Partition& p, std::span<const std::vector<VertexId>> seed_lists,
                           std::uint32_t epoch, std::uint32_t macrobatch_index,
                           std::uint32_t first_minibatch_index, std::uint32_t feature_round_width,
                           std::uint64_t rng_domain_tag, SamplingPlan plan);

// One collective relay samples layer `layer_index` (1-based) for every
// minibatch of the macrobatch: fan neighbors with replacement per destination
// vertex, drawn on the owner rank from a stream keyed on (rng_root, domain,
// epoch, rank, minibatch, layer, vertex, position) so results do not depend
// on macrobatch size. Vertices with no neighbors contribute nothing.
void sample_layer(RankHandle& handle, const Partition& p, Macrobatch& mb,
                  std::uint32_t layer_index, std::uint32_t fan, std::uint64_t rng_root);

// One collective relay fetches the feature row of every vertex in the union
// of the round's minibatch vertex sets, each exactly once (plus the cached
// aggregate row when the plan asks for it). Counts remote/total fetched
// vectors on this rank.
FeatureTable fetch_features(RankHandle& handle, const Partition& p, const AggCache* cache,
                            Macrobatch& mb, std::uint32_t round, std::uint64_t* payload_out = nullptr);

// Assembles the round's minibatches into layered CSR/CSC subgraphs with
// gathered feature rows, labels and degree metadata. Deterministic.
std::vector<SampledSubgraph> build_subgraphs(const Partition& p, const Macrobatch& mb,
                                             std::uint32_t round, const FeatureTable& table);

// Convenience: sample all layers, run every feature round, and assemble all
// B subgraphs in minibatch order.
std::vector<SampledSubgraph> run_macrobatch(RankHandle& handle, const Partition& p,
                                            const AggCache* cache, Macrobatch& mb,
                                            std::span<const std::uint32_t> fans,
                                            std::uint64_t rng_root);

}  // namespace mbgnn
