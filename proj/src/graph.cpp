#include "mbgnn/graph.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mbgnn {

namespace {

void build_csr(VertexId n, const std::vector<std::pair<VertexId, VertexId>>& edges,
               std::vector<EdgeIndex>& offsets, std::vector<VertexId>& targets, bool by_target) {
  offsets.assign(n + 1, 0);
  for (const auto& [s, t] : edges) offsets[(by_target ? t : s) + 1]++;
  for (VertexId v = 0; v < n; ++v) offsets[v + 1] += offsets[v];
  targets.resize(edges.size());
  std::vector<EdgeIndex> cursor(offsets.begin(), offsets.end() - 1);
  for (const auto& [s, t] : edges) {
    if (by_target)
      targets[cursor[t]++] = s;
    else
      targets[cursor[s]++] = t;
  }
}

}  // namespace

Graph build_graph(VertexId num_vertices, const std::vector<std::pair<VertexId, VertexId>>& edges) {
  for (const auto& [s, t] : edges) {
    if (s >= num_vertices || t >= num_vertices) throw BoundsError("edge endpoint out of range");
  }
  Graph g;
  g.num_vertices = num_vertices;
  build_csr(num_vertices, edges, g.csr_offsets, g.csr_targets, /*by_target=*/false);
  build_csr(num_vertices, edges, g.csc_offsets, g.csc_sources, /*by_target=*/true);
  return g;
}

Graph load_edge_list(const std::string& path, VertexId num_vertices) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge list: " + path);
  std::vector<std::pair<VertexId, VertexId>> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    long long s, t;
    if (ls >> s) {
      std::string extra;
      if (!(ls >> t) || (ls >> extra)) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": expected \"src dst\"");
      }
      if (s < 0 || t < 0 || s >= static_cast<long long>(num_vertices) ||
          t >= static_cast<long long>(num_vertices)) {
        throw BoundsError(path + ":" + std::to_string(line_no) + ": vertex id out of range");
      }
      edges.emplace_back(static_cast<VertexId>(s), static_cast<VertexId>(t));
    } else if (!ls.eof()) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected \"src dst\"");
    }
    // blank lines are skipped
  }
  return build_graph(num_vertices, edges);
}

Graph make_undirected(const Graph& g) {
  std::vector<std::pair<VertexId, VertexId>> edges;
  edges.reserve(g.num_edges() * 2);
  for (VertexId v = 0; v < g.num_vertices; ++v)
    for (VertexId t : g.out_neighbors(v)) edges.emplace_back(v, t);
  for (VertexId v = 0; v < g.num_vertices; ++v)
    for (VertexId t : g.out_neighbors(v)) edges.emplace_back(t, v);
  Graph out = build_graph(g.num_vertices, edges);
  out.feature_dim = g.feature_dim;
  out.features = g.features;
  out.labels = g.labels;
  out.train_mask = g.train_mask;
  out.test_mask = g.test_mask;
  return out;
}

void attach_features(Graph& g, Matrix<float> features, std::vector<std::int32_t> labels,
                     std::vector<std::uint8_t> train_mask, std::vector<std::uint8_t> test_mask) {
  if (features.rows != g.num_vertices)
    throw DimensionError("feature rows " + std::to_string(features.rows) + " != vertices " +
                         std::to_string(g.num_vertices));
  if (labels.size() != g.num_vertices || train_mask.size() != g.num_vertices ||
      test_mask.size() != g.num_vertices)
    throw DimensionError("label/mask length != num_vertices");
  for (VertexId v = 0; v < g.num_vertices; ++v) {
    if (train_mask[v] && test_mask[v])
      throw ValidationError("vertex " + std::to_string(v) + " in both train and test masks");
  }
  g.feature_dim = static_cast<std::uint32_t>(features.cols);
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.train_mask = std::move(train_mask);
  g.test_mask = std::move(test_mask);
}

Matrix<float> load_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path);
  std::uint8_t header[8];
  if (!in.read(reinterpret_cast<char*>(header), 8)) throw ParseError(path + ": truncated header");
  ByteReader hr(header, 8);
  std::uint32_t rows = hr.u32(), cols = hr.u32();
  Matrix<float> m(rows, cols);
  if (!in.read(reinterpret_cast<char*>(m.data.data()),
               static_cast<std::streamsize>(sizeof(float) * m.data.size())))
    throw ParseError(path + ": truncated feature data");
  return m;
}

void save_feature_file(const std::string& path, const Matrix<float>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file: " + path);
  Bytes header;
  ByteWriter w(header);
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(m.cols));
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(sizeof(float) * m.data.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::vector<std::int32_t> load_label_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open label file: " + path);
  std::uint8_t header[4];
  if (!in.read(reinterpret_cast<char*>(header), 4)) throw ParseError(path + ": truncated header");
  ByteReader hr(header, 4);
  std::vector<std::int32_t> labels(hr.u32());
  if (!in.read(reinterpret_cast<char*>(labels.data()),
               static_cast<std::streamsize>(sizeof(std::int32_t) * labels.size())))
    throw ParseError(path + ": truncated label data");
  return labels;
}

void save_label_file(const std::string& path, const std::vector<std::int32_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write label file: " + path);
  Bytes header;
  ByteWriter w(header);
  w.u32(static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(sizeof(std::int32_t) * labels.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::vector<std::uint8_t> load_mask_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mask file: " + path);
  std::uint8_t header[4];
  if (!in.read(reinterpret_cast<char*>(header), 4)) throw ParseError(path + ": truncated header");
  ByteReader hr(header, 4);
  std::vector<std::uint8_t> mask(hr.u32());
  if (!mask.empty() &&
      !in.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(mask.size())))
    throw ParseError(path + ": truncated mask data");
  return mask;
}

void save_mask_file(const std::string& path, const std::vector<std::uint8_t>& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write mask file: " + path);
  Bytes header;
  ByteWriter w(header);
  w.u32(static_cast<std::uint32_t>(mask.size()));
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  if (!mask.empty())
    out.write(reinterpret_cast<const char*>(mask.data()), static_cast<std::streamsize>(mask.size()));
  if (!out) throw IoError("write failed: " + path);
}

void export_subgraph_coo(const SampledSubgraph& sg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write subgraph export: " + path);
  out << sg.num_local_vertices() << ' ' << sg.total_edges() << ' ' << sg.layer_count << '\n';
  for (std::uint32_t k = 0; k < sg.layers.size(); ++k) {
    const auto& l = sg.layers[k];
    const std::uint32_t num_src = static_cast<std::uint32_t>(l.csr_offsets.size()) - 1;
    for (std::uint32_t u = 0; u < num_src; ++u) {
      for (std::uint32_t e = l.csr_offsets[u]; e < l.csr_offsets[u + 1]; ++e) {
        out << u << ' ' << l.csr_targets[e] << ' ' << k << '\n';
      }
    }
  }
  for (std::uint32_t v = 0; v < sg.num_local_vertices(); ++v) {
    out << v << ' ' << sg.local_to_global[v] << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

CooSubgraph load_subgraph_coo(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open subgraph export: " + path);
  CooSubgraph coo;
  std::uint64_t num_edges = 0;
  if (!(in >> coo.num_vertices >> num_edges >> coo.layer_count))
    throw ParseError(path + ": bad header");
  coo.src.resize(num_edges);
  coo.dst.resize(num_edges);
  coo.layer.resize(num_edges);
  for (std::uint64_t e = 0; e < num_edges; ++e) {
    if (!(in >> coo.src[e] >> coo.dst[e] >> coo.layer[e]))
      throw ParseError(path + ": truncated edge list");
  }
  coo.local_to_global.resize(coo.num_vertices);
  for (std::uint32_t v = 0; v < coo.num_vertices; ++v) {
    std::uint32_t local;
    VertexId global;
    if (!(in >> local >> global) || local != v) throw ParseError(path + ": bad id map");
    coo.local_to_global[v] = global;
  }
  return coo;
}

}  // namespace mbgnn
