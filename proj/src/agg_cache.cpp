#include "mbgnn/agg_cache.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <unordered_map>

namespace mbgnn {

const char* aggregator_name(AggregatorKind k) {
  switch (k) {
    case AggregatorKind::kMean: return "mean";
    case AggregatorKind::kNormalizedSum: return "normalized-sum";
    case AggregatorKind::kSum: return "sum";
  }
  return "?";
}

SamplingPlan plan_without_cache(std::uint32_t model_depth) {
  return {model_depth, model_depth, false};
}

SamplingPlan plan_with_cache(std::uint32_t model_depth) {
  if (model_depth == 0) throw ConfigError("model depth must be at least 1");
  return {model_depth, model_depth - 1, true};
}

AggCache build_cache(RankHandle& handle, const Partition& p, AggregatorKind kind) {
  if (!p.has_features()) throw ValidationError("build_cache: features not scattered");
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint32_t dim = static_cast<std::uint32_t>(p.local_features.cols);
  const int P = handle.num_ranks();

  // Remote neighbor rows needed by any owned vertex, fetched once each.
  std::vector<std::vector<VertexId>> wanted(P);
  {
    std::vector<VertexId> remote;
    for (std::uint32_t i = 0; i < p.num_owned(); ++i) {
      for (VertexId u : p.local_neighbors(i)) {
        if (!p.owns(u)) remote.push_back(u);
      }
    }
    std::sort(remote.begin(), remote.end());
    remote.erase(std::unique(remote.begin(), remote.end()), remote.end());
    for (VertexId u : remote) wanted[p.owner_of(u)].push_back(u);
  }

  std::vector<Bytes> requests(P);
  for (int d = 0; d < P; ++d) {
    if (wanted[d].empty()) continue;
    ByteWriter w(requests[d]);
    for (VertexId u : wanted[d]) w.u32(u);
  }

  auto responses = handle.relay(RelayKind::kFeature, requests, [&](int, const Bytes& req) {
    ByteReader r(req);
    Bytes out;
    ByteWriter w(out);
    while (!r.done()) {
      const VertexId v = r.u32();
      w.raw(p.local_features.row(p.local_index(v)), sizeof(float) * dim);
    }
    return out;
  });

  std::unordered_map<VertexId, std::uint32_t> remote_index;
  Matrix<float> remote_rows;
  {
    std::size_t total = 0;
    for (int d = 0; d < P; ++d) total += wanted[d].size();
    remote_rows.resize(total, dim);
    std::size_t at = 0;
    for (int d = 0; d < P; ++d) {
      if (wanted[d].empty()) continue;
      ByteReader r(responses[d]);
      for (VertexId u : wanted[d]) {
        r.raw(remote_rows.row(at), sizeof(float) * dim);
        remote_index.emplace(u, static_cast<std::uint32_t>(at));
        ++at;
      }
    }
    auto& c = handle.counters();
    c.features_fetched_remote += total;
    c.features_fetched_total += total;
  }

  AggCache cache;
  cache.kind = kind;
  cache.rows.resize(p.num_owned(), dim);
  parallel_for(p.num_owned(), [&](std::size_t begin, std::size_t end) {
    std::vector<const float*> rows;
    std::vector<std::uint32_t> degs;
    for (std::size_t i = begin; i < end; ++i) {
      const VertexId v = p.owned_vertices[i];
      auto adj = p.local_neighbors(static_cast<std::uint32_t>(i));
      rows.clear();
      degs.clear();
      for (VertexId u : adj) {
        rows.push_back(p.owns(u) ? p.local_features.row(p.local_index(u))
                                 : remote_rows.row(remote_index.at(u)));
        degs.push_back(p.global_degrees[u]);
      }
      aggregate_neighbor_rows<float>(kind, rows.data(), degs.data(), rows.size(),
                                     p.global_degrees[v], dim,
                                     cache.rows.row(i));
    }
  });

  cache.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cache;
}

namespace {
constexpr std::uint32_t kCacheMagic = 0x4d424143;  // "MBAC"
}

void save_cache(const AggCache& cache, const Partition& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write cache file: " + path);
  Bytes header;
  ByteWriter w(header);
  w.u32(kCacheMagic);
  w.u32(static_cast<std::uint32_t>(cache.kind));
  w.u32(static_cast<std::uint32_t>(cache.rows.rows));
  w.u32(static_cast<std::uint32_t>(cache.rows.cols));
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  for (std::size_t i = 0; i < cache.rows.rows; ++i) {
    Bytes rec;
    ByteWriter rw(rec);
    rw.u32(p.owned_vertices[i]);
    rw.raw(cache.rows.row(i), sizeof(float) * cache.rows.cols);
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw IoError("write failed: " + path);
}

AggCache load_cache(const std::string& path, const Partition& p) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open cache file: " + path);
  std::uint8_t header[16];
  if (!in.read(reinterpret_cast<char*>(header), 16)) throw ParseError(path + ": truncated header");
  ByteReader r(header, 16);
  if (r.u32() != kCacheMagic) throw ParseError(path + ": not a cache file");
  AggCache cache;
  cache.kind = static_cast<AggregatorKind>(r.u32());
  const std::uint32_t rows = r.u32(), cols = r.u32();
  if (rows != p.num_owned()) throw ValidationError(path + ": cache row count != owned vertices");
  cache.rows.resize(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i) {
    std::uint8_t idbuf[4];
    if (!in.read(reinterpret_cast<char*>(idbuf), 4)) throw ParseError(path + ": truncated record");
    ByteReader ir(idbuf, 4);
    if (ir.u32() != p.owned_vertices[i])
      throw ValidationError(path + ": cache vertex order does not match partition");
    if (!in.read(reinterpret_cast<char*>(cache.rows.row(i)),
                 static_cast<std::streamsize>(sizeof(float) * cols)))
      throw ParseError(path + ": truncated record");
  }
  return cache;
}

}  // namespace mbgnn
