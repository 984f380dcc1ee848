#include "mbgnn/sampler.hpp"

#include <algorithm>

#include "mbgnn/rng.hpp"

namespace mbgnn {

const float* FeatureTable::raw_row(VertexId v) const {
  auto it = index.find(v);
  if (it == index.end())
    throw AssemblyError("feature row missing for vertex " + std::to_string(v));
  return raw.row(it->second);
}

const float* FeatureTable::aggregate_row(VertexId v) const {
  auto it = index.find(v);
  if (it == index.end() || aggregate.rows != raw.rows)
    throw AssemblyError("aggregate row missing for vertex " + std::to_string(v));
  return aggregate.row(it->second);
}

std::vector<std::vector<VertexId>> select_seeds(const Partition& p, std::uint32_t epoch,
                                                std::uint32_t minibatch_size,
                                                std::uint64_t rng_root) {
  if (minibatch_size == 0) throw ConfigError("minibatch_size must be positive");
  if (p.local_train_mask.size() != p.num_owned())
    throw ValidationError("select_seeds: partition has no train mask rows");
  std::vector<VertexId> train;
  for (std::uint32_t i = 0; i < p.num_owned(); ++i) {
    if (p.local_train_mask[i]) train.push_back(p.owned_vertices[i]);
  }
  shuffle_with_key(train, rng_key({rng_root, rng_domain::kSeeds, epoch,
                                   static_cast<std::uint64_t>(p.rank)}));
  const std::size_t full = train.size() / minibatch_size;  // drop-last rule
  std::vector<std::vector<VertexId>> out(full);
  for (std::size_t m = 0; m < full; ++m) {
    out[m].assign(train.begin() + static_cast<std::ptrdiff_t>(m * minibatch_size),
                  train.begin() + static_cast<std::ptrdiff_t>((m + 1) * minibatch_size));
  }
  return out;
}

Macrobatch make_macrobatch(const Partition& p, std::span<const std::vector<VertexId>> seed_lists,
                           std::uint32_t epoch, std::uint32_t macrobatch_index,
                           std::uint32_t first_minibatch_index, std::uint32_t feature_round_width,
                           std::uint64_t rng_domain_tag, SamplingPlan plan) {
  Macrobatch mb;
  mb.epoch = epoch;
  mb.macrobatch_index = macrobatch_index;
  mb.first_minibatch_index = first_minibatch_index;
  mb.feature_round_width = std::max<std::uint32_t>(1, feature_round_width);
  mb.rng_domain_tag = rng_domain_tag;
  mb.plan = plan;
  mb.minibatches.resize(seed_lists.size());
  for (std::size_t i = 0; i < seed_lists.size(); ++i) {
    MinibatchFrontier& f = mb.minibatches[i];
    f.locals = seed_lists[i];
    for (std::uint32_t j = 0; j < f.locals.size(); ++j) {
      const VertexId v = f.locals[j];
      if (!p.owns(v))
        throw ValidationError("seed " + std::to_string(v) + " not owned by rank " +
                              std::to_string(p.rank));
      if (!f.g2l.emplace(v, j).second)
        throw ValidationError("duplicate seed " + std::to_string(v));
    }
    f.layer_counts.push_back(static_cast<std::uint32_t>(f.locals.size()));
  }
  return mb;
}

void sample_layer(RankHandle& handle, const Partition& p, Macrobatch& mb,
                  std::uint32_t layer_index, std::uint32_t fan, std::uint64_t rng_root) {
  if (layer_index == 0 || layer_index > mb.plan.sampled_layers)
    throw ValidationError("sample_layer: layer index out of plan range");
  for (const auto& f : mb.minibatches) {
    if (f.layer_counts.size() != layer_index)
      throw ValidationError("sample_layer: layers must be sampled in order");
  }
  const int P = handle.num_ranks();
  const std::uint64_t rank64 = static_cast<std::uint64_t>(p.rank);
  const std::uint32_t B = mb.size();

  // Inspector pass: count the records each destination rank will receive so
  // request buffers are sized exactly before serialization.
  std::vector<std::size_t> records_per_rank(P, 0);
  for (std::uint32_t i = 0; i < B; ++i) {
    const auto& f = mb.minibatches[i];
    const std::uint32_t n = f.layer_counts[layer_index - 1];
    for (std::uint32_t j = 0; j < n; ++j) records_per_rank[p.owner_of(f.locals[j])]++;
  }

  std::vector<Bytes> requests(P);
  struct Slot {
    std::uint32_t minibatch;
    std::uint32_t position;
  };
  std::vector<std::vector<Slot>> bookkeeping(P);
  for (int d = 0; d < P; ++d) {
    requests[d].reserve(records_per_rank[d] * kSampleRequestRecordBytes);
    bookkeeping[d].reserve(records_per_rank[d]);
  }

  // Executor pass: serialize (stream key, vertex) records minibatch-major and
  // remember which (minibatch, position) each record belongs to; responses
  // come back in request order.
  for (std::uint32_t i = 0; i < B; ++i) {
    const auto& f = mb.minibatches[i];
    const std::uint64_t mb_id = mb.first_minibatch_index + i;
    const std::uint32_t n = f.layer_counts[layer_index - 1];
    for (std::uint32_t j = 0; j < n; ++j) {
      const VertexId v = f.locals[j];
      const int owner = p.owner_of(v);
      ByteWriter w(requests[owner]);
      w.u64(rng_key({rng_root, mb.rng_domain_tag, mb.epoch, rank64, mb_id, layer_index, v, j}));
      w.u32(v);
      bookkeeping[owner].push_back({i, j});
    }
  }

  auto responses = handle.relay(RelayKind::kTopology, requests, [&](int, const Bytes& req) {
    ByteReader r(req);
    Bytes out;
    out.reserve((req.size() / kSampleRequestRecordBytes) *
                (kSampleResponseCountBytes + fan * kEdgeIdBytes));
    ByteWriter w(out);
    while (!r.done()) {
      const std::uint64_t key = r.u64();
      const VertexId v = r.u32();
      if (v >= p.num_global_vertices) throw BoundsError("sample request for unknown vertex");
      if (!p.owns(v))
        throw ProtocolError("sample request for vertex " + std::to_string(v) +
                            " not owned by rank " + std::to_string(p.rank));
      const auto adj = p.local_neighbors(p.local_index(v));
      if (adj.empty()) {
        w.u32(0);
        continue;
      }
      w.u32(fan);
      RngStream rng(key);
      for (std::uint32_t t = 0; t < fan; ++t)
        w.u32(adj[static_cast<std::size_t>(rng.at(t) % adj.size())]);
    }
    return out;
  });

  // Integrate responses back through the request-time bookkeeping.
  for (auto& f : mb.minibatches) {
    f.sampled.emplace_back(f.layer_counts[layer_index - 1]);
  }
  for (int d = 0; d < P; ++d) {
    if (bookkeeping[d].empty()) continue;
    ByteReader r(responses[d]);
    for (const Slot& slot : bookkeeping[d]) {
      const std::uint32_t cnt = r.u32();
      auto& dst = mb.minibatches[slot.minibatch].sampled[layer_index - 1][slot.position];
      dst.resize(cnt);
      for (std::uint32_t t = 0; t < cnt; ++t) dst[t] = r.u32();
    }
    if (!r.done()) throw ProtocolError("sample response longer than expected");
  }

  // Extend each frontier: new vertices in first-encounter order.
  parallel_for(B, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto& f = mb.minibatches[i];
      const auto& layer = f.sampled[layer_index - 1];
      for (const auto& ids : layer) {
        for (VertexId g : ids) {
          if (f.g2l.emplace(g, static_cast<std::uint32_t>(f.locals.size())).second)
            f.locals.push_back(g);
        }
      }
      f.layer_counts.push_back(static_cast<std::uint32_t>(f.locals.size()));
    }
  });
}

FeatureTable fetch_features(RankHandle& handle, const Partition& p, const AggCache* cache,
                            Macrobatch& mb, std::uint32_t round, std::uint64_t* payload_out) {
  const bool with_agg = mb.plan.fetch_aggregates;
  if (with_agg && cache == nullptr)
    throw ConfigError("fetch_features: plan fetches aggregates but no cache given");
  if (!p.has_features()) throw ValidationError("fetch_features: features not scattered");
  for (const auto& f : mb.minibatches) {
    if (f.layer_counts.size() != mb.plan.sampled_layers + 1)
      throw ValidationError("fetch_features: sampling incomplete for this macrobatch");
  }
  const auto [mb_begin, mb_end] = mb.round_range(round);
  if (mb_begin >= mb_end && !(mb.minibatches.empty() && round == 0))
    throw ValidationError("fetch_features: round out of range");

  // Union of the round's vertex sets, ascending.
  std::vector<VertexId> uni;
  for (std::uint32_t i = mb_begin; i < mb_end; ++i) {
    const auto& f = mb.minibatches[i];
    uni.insert(uni.end(), f.locals.begin(), f.locals.end());
  }
  std::sort(uni.begin(), uni.end());
  uni.erase(std::unique(uni.begin(), uni.end()), uni.end());

  const std::uint32_t dim = static_cast<std::uint32_t>(p.local_features.cols);
  const int P = handle.num_ranks();
  FeatureTable table;
  table.union_size = uni.size();
  table.raw.resize(uni.size(), dim);
  if (with_agg) table.aggregate.resize(uni.size(), dim);

  std::vector<std::vector<std::uint32_t>> slot_by_rank(P);  // table row per requested id
  std::vector<Bytes> requests(P);
  std::uint64_t remote = 0;
  for (std::uint32_t s = 0; s < uni.size(); ++s) {
    const VertexId v = uni[s];
    if (v >= p.num_global_vertices) throw BoundsError("fetch for unknown vertex id");
    table.index.emplace(v, s);
    const int owner = p.owner_of(v);
    if (owner == p.rank) {
      const std::uint32_t li = p.local_index(v);
      std::memcpy(table.raw.row(s), p.local_features.row(li), sizeof(float) * dim);
      if (with_agg) std::memcpy(table.aggregate.row(s), cache->rows.row(li), sizeof(float) * dim);
    } else {
      ByteWriter w(requests[owner]);
      w.u32(v);
      slot_by_rank[owner].push_back(s);
      ++remote;
    }
  }

  const std::uint64_t payload_before = handle.counters().feat_payload_bytes;
  auto responses = handle.relay(RelayKind::kFeature, requests, [&, with_agg](int, const Bytes& req) {
    ByteReader r(req);
    Bytes out;
    out.reserve((req.size() / 4) * sizeof(float) * dim * (with_agg ? 2 : 1));
    ByteWriter w(out);
    while (!r.done()) {
      const VertexId v = r.u32();
      if (v >= p.num_global_vertices) throw BoundsError("fetch request for unknown vertex");
      const std::uint32_t li = p.local_index(v);
      w.raw(p.local_features.row(li), sizeof(float) * dim);
      if (with_agg) {
        if (cache == nullptr) throw ConfigError("aggregate fetch without a cache");
        w.raw(cache->rows.row(li), sizeof(float) * dim);
      }
    }
    return out;
  });

  for (int d = 0; d < P; ++d) {
    if (slot_by_rank[d].empty()) continue;
    ByteReader r(responses[d]);
    for (std::uint32_t s : slot_by_rank[d]) {
      r.raw(table.raw.row(s), sizeof(float) * dim);
      if (with_agg) r.raw(table.aggregate.row(s), sizeof(float) * dim);
    }
    if (!r.done()) throw ProtocolError("feature response longer than expected");
  }

  const std::uint64_t vectors_per_id = with_agg ? 2 : 1;
  auto& c = handle.counters();
  c.features_fetched_remote += remote * vectors_per_id;
  c.features_fetched_total += uni.size() * vectors_per_id;
  if (payload_out)
    *payload_out = handle.counters().feat_payload_bytes - payload_before;
  return table;
}

std::vector<SampledSubgraph> build_subgraphs(const Partition& p, const Macrobatch& mb,
                                             std::uint32_t round, const FeatureTable& table) {
  const auto [mb_begin, mb_end] = mb.round_range(round);
  std::vector<SampledSubgraph> out(mb_end - mb_begin);
  const std::uint32_t dim = static_cast<std::uint32_t>(table.raw.cols);

  parallel_for(mb_end - mb_begin, [&](std::size_t begin, std::size_t end) {
    for (std::size_t w = begin; w < end; ++w) {
      const MinibatchFrontier& f = mb.minibatches[mb_begin + w];
      SampledSubgraph& sg = out[w];
      const std::uint32_t n_local = static_cast<std::uint32_t>(f.locals.size());
      sg.layer_count = static_cast<std::uint32_t>(f.sampled.size());
      sg.layer_vertex_counts = f.layer_counts;
      sg.local_to_global = f.locals;
      sg.layers.resize(sg.layer_count);

      for (std::uint32_t k = 0; k < sg.layer_count; ++k) {
        const auto& lists = f.sampled[k];
        auto& layer = sg.layers[k];
        const std::uint32_t n_dest = f.layer_counts[k];
        const std::uint32_t n_src = f.layer_counts[k + 1];

        layer.csc_offsets.assign(n_dest + 1, 0);
        layer.dest_in_degree.assign(n_dest, 0);
        for (std::uint32_t j = 0; j < n_dest; ++j) {
          layer.dest_in_degree[j] = static_cast<std::uint32_t>(lists[j].size());
          layer.csc_offsets[j + 1] = layer.csc_offsets[j] + layer.dest_in_degree[j];
        }
        const std::uint32_t n_edges = layer.csc_offsets[n_dest];
        layer.csc_sources.resize(n_edges);
        std::vector<std::uint32_t> src_count(n_src, 0);
        {
          std::uint32_t at = 0;
          for (std::uint32_t j = 0; j < n_dest; ++j) {
            for (VertexId g : lists[j]) {
              const std::uint32_t u = f.g2l.at(g);
              layer.csc_sources[at++] = u;
              src_count[u]++;
            }
          }
        }
        layer.csr_offsets.assign(n_src + 1, 0);
        for (std::uint32_t u = 0; u < n_src; ++u)
          layer.csr_offsets[u + 1] = layer.csr_offsets[u] + src_count[u];
        layer.csr_targets.resize(n_edges);
        std::vector<std::uint32_t> cursor(layer.csr_offsets.begin(), layer.csr_offsets.end() - 1);
        for (std::uint32_t j = 0; j < n_dest; ++j) {
          for (std::uint32_t e = layer.csc_offsets[j]; e < layer.csc_offsets[j + 1]; ++e) {
            layer.csr_targets[cursor[layer.csc_sources[e]]++] = j;
          }
        }
      }

      sg.features.resize(n_local, dim);
      for (std::uint32_t v = 0; v < n_local; ++v)
        std::memcpy(sg.features.row(v), table.raw_row(f.locals[v]), sizeof(float) * dim);
      if (mb.plan.fetch_aggregates) {
        sg.cached_aggregate.resize(n_local, dim);
        for (std::uint32_t v = 0; v < n_local; ++v)
          std::memcpy(sg.cached_aggregate.row(v), table.aggregate_row(f.locals[v]),
                      sizeof(float) * dim);
      }

      sg.labels.resize(f.num_seeds());
      for (std::uint32_t s = 0; s < f.num_seeds(); ++s)
        sg.labels[s] = p.local_labels[p.local_index(f.locals[s])];
      sg.global_degrees.resize(n_local);
      for (std::uint32_t v = 0; v < n_local; ++v)
        sg.global_degrees[v] = p.global_degrees[f.locals[v]];
    }
  });
  return out;
}

std::vector<SampledSubgraph> run_macrobatch(RankHandle& handle, const Partition& p,
                                            const AggCache* cache, Macrobatch& mb,
                                            std::span<const std::uint32_t> fans,
                                            std::uint64_t rng_root) {
  if (fans.size() < mb.plan.sampled_layers)
    throw ConfigError("run_macrobatch: fewer fans than sampled layers");
  for (std::uint32_t k = 1; k <= mb.plan.sampled_layers; ++k)
    sample_layer(handle, p, mb, k, fans[k - 1], rng_root);
  std::vector<SampledSubgraph> out;
  out.reserve(mb.size());
  // An empty macrobatch still runs one fetch round: the relay is collective
  // and peer ranks may have work.
  const std::uint32_t rounds = std::max<std::uint32_t>(1, mb.num_feature_rounds());
  for (std::uint32_t r = 0; r < rounds; ++r) {
    FeatureTable table = fetch_features(handle, p, cache, mb, r);
    auto built = build_subgraphs(p, mb, r, table);
    for (auto& sg : built) out.push_back(std::move(sg));
  }
  return out;
}

}  // namespace mbgnn
