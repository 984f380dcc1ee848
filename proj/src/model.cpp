#include "mbgnn/model.hpp"

#include <fstream>

namespace mbgnn {

const char* model_name(ModelKind k) {
  switch (k) {
    case ModelKind::kSage: return "sage";
    case ModelKind::kGcn: return "gcn";
    case ModelKind::kGin: return "gin";
  }
  return "?";
}

ModelKind model_from_name(const std::string& name) {
  if (name == "sage") return ModelKind::kSage;
  if (name == "gcn") return ModelKind::kGcn;
  if (name == "gin") return ModelKind::kGin;
  throw ConfigError("unknown model: " + name);
}

AggregatorKind aggregator_for(ModelKind k) {
  switch (k) {
    case ModelKind::kSage: return AggregatorKind::kMean;
    case ModelKind::kGcn: return AggregatorKind::kNormalizedSum;
    case ModelKind::kGin: return AggregatorKind::kSum;
  }
  return AggregatorKind::kMean;
}

Model::Model(const ModelConfig& cfg, std::uint64_t rng_root) : cfg_(cfg), rng_root_(rng_root) {
  if (cfg.depth == 0) throw ConfigError("model depth must be at least 1");
  if (cfg.in_dim == 0 || cfg.num_classes == 0)
    throw ConfigError("model needs in_dim and num_classes");
  for (std::uint32_t c = 0; c < cfg.depth; ++c) {
    const std::uint32_t in = c == 0 ? cfg.in_dim : cfg.hidden_dim;
    const std::uint32_t out = c + 1 == cfg.depth ? cfg.num_classes : cfg.hidden_dim;
    switch (cfg.kind) {
      case ModelKind::kSage:
        sage_.emplace_back(in, out);
        sage_.back().init(rng_root, c);
        break;
      case ModelKind::kGcn:
        gcn_.emplace_back(in, out);
        gcn_.back().init(rng_root, c);
        break;
      case ModelKind::kGin:
        gin_.emplace_back(in, cfg.hidden_dim, out, /*output_stage=*/c + 1 < cfg.depth,
                          cfg.bn_momentum, cfg.bn_eps);
        gin_.back().init(rng_root, c);
        break;
    }
  }
  if (cfg.kind != ModelKind::kGin) {
    for (std::uint32_t c = 0; c + 1 < cfg.depth; ++c) {
      relu_.emplace_back();
      dropout_.emplace_back(cfg.dropout);
    }
  }
  layer_out_.resize(cfg.depth);
  relu_out_.resize(cfg.depth);
  act_.resize(cfg.depth);
}

void Model::check_subgraph(const SampledSubgraph& sg, bool& cached_plan) const {
  if (sg.layer_count == cfg_.depth) {
    cached_plan = false;
  } else if (sg.layer_count + 1 == cfg_.depth) {
    if (sg.cached_aggregate.rows != sg.num_local_vertices())
      throw ConfigError("subgraph is one layer short but carries no cached aggregates");
    cached_plan = true;
  } else {
    throw DimensionError("subgraph layer count " + std::to_string(sg.layer_count) +
                         " does not match model depth " + std::to_string(cfg_.depth));
  }
  if (sg.features.cols != cfg_.in_dim)
    throw DimensionError("subgraph feature dim != model in_dim");
}

AggregationInput<float> Model::layer_input(const SampledSubgraph& sg, std::uint32_t c,
                                           bool cached_plan) const {
  AggregationInput<float> in;
  in.global_degrees = sg.global_degrees.data();
  if (cached_plan && c == 1) {
    in.cached = &sg.cached_aggregate;
    in.num_dest = sg.layer_vertex_counts.back();
    in.num_src = in.num_dest;
    return in;
  }
  const std::uint32_t s = cfg_.depth - c;  // sampling layer index (0-based)
  in.topo = &sg.layers[s];
  in.num_dest = sg.layer_vertex_counts[s];
  in.num_src = sg.layer_vertex_counts[s + 1];
  return in;
}

void Model::forward(const SampledSubgraph& sg, const StepKey& key, bool train) {
  bool cached_plan = false;
  check_subgraph(sg, cached_plan);
  fwd_.sg = &sg;
  fwd_.cached_plan = cached_plan;
  fwd_.train = train;
  fwd_.inputs.assign(cfg_.depth, nullptr);

  const Matrix<float>* cur = &sg.features;
  for (std::uint32_t c = 1; c <= cfg_.depth; ++c) {
    const auto in = layer_input(sg, c, cached_plan);
    fwd_.inputs[c - 1] = cur;
    Matrix<float>& out = layer_out_[c - 1];
    switch (cfg_.kind) {
      case ModelKind::kSage: sage_[c - 1].forward(in, *cur, out); break;
      case ModelKind::kGcn: gcn_[c - 1].forward(in, *cur, out); break;
      case ModelKind::kGin: gin_[c - 1].forward(in, *cur, train, out); break;
    }
    if (c < cfg_.depth && cfg_.kind != ModelKind::kGin) {
      relu_[c - 1].forward(out, in.num_dest, relu_out_[c - 1]);
      dropout_[c - 1].forward(
          relu_out_[c - 1], in.num_dest,
          rng_key({rng_root_, rng_domain::kDropout, key.epoch, static_cast<std::uint64_t>(key.rank),
                   key.minibatch, c}),
          train, act_[c - 1]);
      cur = &act_[c - 1];
    } else {
      cur = &out;
    }
  }
  logits_ = cur;
  if (!train) {
    // Inference holds no gradient state; release every layer's scratch.
    for (auto& l : sage_) l.discard();
    for (auto& l : gcn_) l.discard();
    for (auto& l : gin_) l.discard();
    for (auto& l : relu_) l.discard();
    for (auto& l : dropout_) l.discard();
    fwd_.sg = nullptr;
  }
}

float Model::forward_backward(const SampledSubgraph& sg, const StepKey& key) {
  forward(sg, key, /*train=*/true);
  return backward(sg);
}

float Model::backward(const SampledSubgraph& sg) {
  if (fwd_.sg != &sg || logits_ == nullptr)
    throw PhaseError("model backward without a matching pending forward");
  const std::uint32_t seeds = sg.num_seeds();
  const float loss = softmax_xent(*logits_, seeds, std::span<const std::int32_t>(sg.labels), grad_a_);

  Matrix<float>* grad = &grad_a_;
  Matrix<float>* next = &grad_b_;
  for (std::uint32_t c = cfg_.depth; c >= 1; --c) {
    const auto in = layer_input(sg, c, fwd_.cached_plan);
    if (c < cfg_.depth && cfg_.kind != ModelKind::kGin) {
      dropout_[c - 1].backward(*grad, *next);
      std::swap(grad, next);
      relu_[c - 1].backward(*grad, *next);
      std::swap(grad, next);
    }
    const Matrix<float>& h_in = *fwd_.inputs[c - 1];
    switch (cfg_.kind) {
      case ModelKind::kSage: sage_[c - 1].backward(in, h_in, *grad, *next); break;
      case ModelKind::kGcn: gcn_[c - 1].backward(in, h_in, *grad, *next); break;
      case ModelKind::kGin: gin_[c - 1].backward(in, h_in, *grad, *next); break;
    }
    std::swap(grad, next);
  }
  fwd_.sg = nullptr;
  return loss;
}

std::vector<ParamRef<float>> Model::params() {
  std::vector<ParamRef<float>> out;
  for (auto& l : sage_)
    for (auto& p : l.params()) out.push_back(p);
  for (auto& l : gcn_)
    for (auto& p : l.params()) out.push_back(p);
  for (auto& l : gin_)
    for (auto& p : l.params()) out.push_back(p);
  return out;
}

std::vector<ParamRef<float>> Model::params() const {
  return const_cast<Model*>(this)->params();
}

void Model::zero_grads() {
  for (auto& p : params()) p.grad->zero();
}

void Model::adam_step() {
  ++step_;
  for (auto& p : params()) mbgnn::adam_step(*p.param, *p.grad, *p.adam, step_, cfg_.adam);
}

std::size_t Model::num_param_elements() const {
  std::size_t n = 0;
  for (const auto& p : params()) n += p.param->data.size();
  return n;
}

void Model::grads_to_flat(std::vector<float>& out) const {
  out.clear();
  out.reserve(num_param_elements());
  for (const auto& p : params())
    out.insert(out.end(), p.grad->data.begin(), p.grad->data.end());
}

void Model::grads_from_flat(const std::vector<float>& in) {
  std::size_t at = 0;
  for (auto& p : params()) {
    if (at + p.grad->data.size() > in.size()) throw DimensionError("flat gradient too short");
    std::copy(in.begin() + static_cast<std::ptrdiff_t>(at),
              in.begin() + static_cast<std::ptrdiff_t>(at + p.grad->data.size()),
              p.grad->data.begin());
    at += p.grad->data.size();
  }
  if (at != in.size()) throw DimensionError("flat gradient size mismatch");
}

std::uint64_t Model::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : params())
    h = fnv1a(p.param->data.data(), p.param->data.size() * sizeof(float), h);
  return h;
}

namespace {
constexpr std::uint32_t kCheckpointMagic = 0x4d42434b;  // "MBCK"

void write_matrix(ByteWriter& w, const Matrix<float>& m) {
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(m.cols));
  w.raw(m.data.data(), m.data.size() * sizeof(float));
}

void read_matrix(ByteReader& r, Matrix<float>& m) {
  const std::uint32_t rows = r.u32(), cols = r.u32();
  m.resize(rows, cols);
  r.raw(m.data.data(), m.data.size() * sizeof(float));
}
}  // namespace

Bytes Model::serialize() const {
  Bytes out;
  ByteWriter w(out);
  w.u32(kCheckpointMagic);
  w.u32(static_cast<std::uint32_t>(cfg_.kind));
  w.u32(cfg_.depth);
  w.u32(cfg_.in_dim);
  w.u32(cfg_.hidden_dim);
  w.u32(cfg_.num_classes);
  w.f32(static_cast<float>(cfg_.dropout));
  w.u64(rng_root_);
  w.u64(step_);
  auto* self = const_cast<Model*>(this);
  for (auto& p : self->params()) {
    write_matrix(w, *p.param);
    p.adam->match(*p.param);
    write_matrix(w, p.adam->m);
    write_matrix(w, p.adam->v);
  }
  for (auto& l : self->gin_) {
    write_matrix(w, l.bn1().running_mean);
    write_matrix(w, l.bn1().running_var);
    if (l.has_output_stage()) {
      write_matrix(w, l.bn2().running_mean);
      write_matrix(w, l.bn2().running_var);
    }
  }
  return out;
}

Model Model::deserialize(const Bytes& bytes) {
  ByteReader r(bytes);
  if (r.u32() != kCheckpointMagic) throw ParseError("not a model checkpoint");
  ModelConfig cfg;
  cfg.kind = static_cast<ModelKind>(r.u32());
  cfg.depth = r.u32();
  cfg.in_dim = r.u32();
  cfg.hidden_dim = r.u32();
  cfg.num_classes = r.u32();
  cfg.dropout = r.f32();
  const std::uint64_t root = r.u64();
  Model m(cfg, root);
  m.step_ = r.u64();
  for (auto& p : m.params()) {
    read_matrix(r, *p.param);
    read_matrix(r, p.adam->m);
    read_matrix(r, p.adam->v);
  }
  for (auto& l : m.gin_) {
    read_matrix(r, l.bn1().running_mean);
    read_matrix(r, l.bn1().running_var);
    if (l.has_output_stage()) {
      read_matrix(r, l.bn2().running_mean);
      read_matrix(r, l.bn2().running_var);
    }
  }
  if (!r.done()) throw ParseError("checkpoint has trailing bytes");
  return m;
}

void Model::save_checkpoint(const std::string& path) const {
  const Bytes b = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw IoError("write failed: " + path);
}

Model Model::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(b);
}

std::vector<std::int32_t> argmax_rows(const Matrix<float>& logits, std::size_t rows) {
  std::vector<std::int32_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<std::int32_t>(best);
  }
  return out;
}

}  // namespace mbgnn
