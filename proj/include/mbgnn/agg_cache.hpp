#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mbgnn/fabric.hpp"
#include "mbgnn/matrix.hpp"
#include "mbgnn/partition.hpp"

namespace mbgnn {

enum class AggregatorKind { kMean, kNormalizedSum, kSum };

const char* aggregator_name(AggregatorKind k);

// Per-vertex full-neighbor aggregate of the static input features, one row
// per OWNED vertex. A vertex with no neighbors gets a zero row. The
// normalized-sum kind uses 1/sqrt((deg(u)+1)(deg(v)+1)) with GLOBAL degrees
// and excludes the self term (the layer adds its own self contribution).
struct AggCache {
  AggregatorKind kind = AggregatorKind::kMean;
  Matrix<float> rows;
  double build_seconds = 0.0;

  const float* row_of(const Partition& p, VertexId global) const {
    return rows.row(p.local_index(global));
  }
};

// Collective: every rank aggregates over the full global neighborhood of its
// owned vertices, pulling non-owned neighbor features through the fabric.
AggCache build_cache(RankHandle& handle, const Partition& p, AggregatorKind kind);

// How many sampling layers a macrobatch materializes. With the cache, the
// last sampling layer is skipped and the feature round additionally carries
// the cached aggregate for every subgraph vertex.
struct SamplingPlan {
  std::uint32_t model_depth = 0;
  std::uint32_t sampled_layers = 0;
  bool fetch_aggregates = false;
};

SamplingPlan plan_without_cache(std::uint32_t model_depth);
SamplingPlan plan_with_cache(std::uint32_t model_depth);

void save_cache(const AggCache& cache, const Partition& p, const std::string& path);
AggCache load_cache(const std::string& path, const Partition& p);

// Shared by the cache builder and its oracle tests: deterministic
// double-accumulated aggregation of one vertex's neighbor rows.
template <typename Real>
void aggregate_neighbor_rows(AggregatorKind kind, const Real* const* neighbor_rows,
                             const std::uint32_t* neighbor_degrees, std::size_t num_neighbors,
                             std::uint32_t self_degree, std::size_t dim, Real* out) {
  for (std::size_t c = 0; c < dim; ++c) out[c] = Real(0);
  if (num_neighbors == 0) return;
  std::vector<double> acc(dim, 0.0);
  for (std::size_t i = 0; i < num_neighbors; ++i) {
    double scale = 1.0;
    if (kind == AggregatorKind::kMean) {
      scale = 1.0 / static_cast<double>(num_neighbors);
    } else if (kind == AggregatorKind::kNormalizedSum) {
      scale = 1.0 / std::sqrt(static_cast<double>(neighbor_degrees[i] + 1) *
                              static_cast<double>(self_degree + 1));
    }
    const Real* row = neighbor_rows[i];
    for (std::size_t c = 0; c < dim; ++c) acc[c] += scale * static_cast<double>(row[c]);
  }
  for (std::size_t c = 0; c < dim; ++c) out[c] = static_cast<Real>(acc[c]);
}

}  // namespace mbgnn
