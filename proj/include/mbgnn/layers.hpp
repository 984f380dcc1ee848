#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mbgnn/matrix.hpp"
#include "mbgnn/rng.hpp"
#include "mbgnn/subgraph.hpp"

namespace mbgnn {

// Forward->backward state machine shared by all layers. Scratch buffers are
// reused across minibatches, so a layer cannot accept a new input before the
// pending gradient computation consumes the saved intermediates.
enum class LayerPhase { kIdle, kForwarded };

inline void require_phase(LayerPhase have, LayerPhase want, const char* op) {
  if (have != want)
    throw PhaseError(std::string(op) + ": layer is " +
                     (have == LayerPhase::kIdle ? "idle" : "holding a pending backward"));
}

// Topology handed to a computational layer: either one sampled bipartite
// layer (CSC rows drive aggregation, CSR drives the backward scatter) or a
// cached full-neighbor aggregate for the same destinations.
template <typename Real>
struct AggregationInput {
  const SampledSubgraph::Layer* topo = nullptr;
  const Matrix<Real>* cached = nullptr;
  const std::uint32_t* global_degrees = nullptr;  // indexed by local id, GCN only
  std::uint32_t num_dest = 0;
  std::uint32_t num_src = 0;

  bool use_cache() const { return cached != nullptr; }
};

template <typename Real>
void glorot_init(Matrix<Real>& w, std::uint64_t rng_root, std::uint64_t tag) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
  RngStream rng({rng_root, rng_domain::kWeights, tag});
  for (std::size_t i = 0; i < w.data.size(); ++i)
    w.data[i] = static_cast<Real>(rng.next_range(-limit, limit));
}

// ---------------------------------------------------------------------------
// Adam

template <typename Real>
struct AdamState {
  Matrix<Real> m, v;
  void match(const Matrix<Real>& p) {
    if (!m.same_shape(p)) {
      m.resize(p.rows, p.cols);
      m.zero();
      v.resize(p.rows, p.cols);
      v.zero();
    }
  }
};

struct AdamConfig {
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard bias-corrected Adam update; `step` is 1-based.
template <typename Real>
void adam_step(Matrix<Real>& param, const Matrix<Real>& grad, AdamState<Real>& state,
               std::uint64_t step, const AdamConfig& cfg) {
  state.match(param);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    const double g = static_cast<double>(grad.data[i]);
    const double m = cfg.beta1 * static_cast<double>(state.m.data[i]) + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * static_cast<double>(state.v.data[i]) + (1.0 - cfg.beta2) * g * g;
    state.m.data[i] = static_cast<Real>(m);
    state.v.data[i] = static_cast<Real>(v);
    param.data[i] -= static_cast<Real>(cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
  }
}

// Named handle on one trainable tensor (with its gradient and Adam moments).
template <typename Real>
struct ParamRef {
  const char* name;
  Matrix<Real>* param;
  Matrix<Real>* grad;
  AdamState<Real>* adam;
};

// ---------------------------------------------------------------------------
// ReLU

template <typename Real>
class ReluLayer {
 public:
  void forward(const Matrix<Real>& in, std::size_t rows, Matrix<Real>& out) {
    require_phase(phase_, LayerPhase::kIdle, "relu forward");
    out.resize(rows, in.cols);
    mask_.assign(rows * in.cols, 0);
    for (std::size_t i = 0; i < rows * in.cols; ++i) {
      const Real v = in.data[i];
      mask_[i] = v > Real(0);
      out.data[i] = mask_[i] ? v : Real(0);
    }
    phase_ = LayerPhase::kForwarded;
  }

  void backward(const Matrix<Real>& grad_out, Matrix<Real>& grad_in) {
    require_phase(phase_, LayerPhase::kForwarded, "relu backward");
    grad_in.resize(grad_out.rows, grad_out.cols);
    for (std::size_t i = 0; i < grad_out.data.size(); ++i)
      grad_in.data[i] = mask_[i] ? grad_out.data[i] : Real(0);
    phase_ = LayerPhase::kIdle;
  }

  void discard() { phase_ = LayerPhase::kIdle; }

 private:
  std::vector<std::uint8_t> mask_;
  LayerPhase phase_ = LayerPhase::kIdle;
};

// ---------------------------------------------------------------------------
// Inverted dropout. The mask is regenerated from the stream key in the
// backward pass, so nothing is stored per element.

template <typename Real>
class DropoutLayer {
 public:
  explicit DropoutLayer(double p) : p_(p) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
  }

  void forward(const Matrix<Real>& in, std::size_t rows, std::uint64_t stream_key, bool train,
               Matrix<Real>& out) {
    require_phase(phase_, LayerPhase::kIdle, "dropout forward");
    key_ = stream_key;
    train_ = train;
    out.resize(rows, in.cols);
    if (!train || p_ == 0.0) {
      std::copy(in.data.begin(), in.data.begin() + static_cast<std::ptrdiff_t>(rows * in.cols),
                out.data.begin());
    } else {
      RngStream rng(key_);
      const Real scale = Real(1.0 / (1.0 - p_));
      for (std::size_t i = 0; i < rows * in.cols; ++i) {
        const double u = static_cast<double>(rng.at(i) >> 11) * 0x1.0p-53;
        out.data[i] = u >= p_ ? in.data[i] * scale : Real(0);
      }
    }
    phase_ = LayerPhase::kForwarded;
  }

  void backward(const Matrix<Real>& grad_out, Matrix<Real>& grad_in) {
    require_phase(phase_, LayerPhase::kForwarded, "dropout backward");
    grad_in.resize(grad_out.rows, grad_out.cols);
    if (!train_ || p_ == 0.0) {
      std::copy(grad_out.data.begin(), grad_out.data.end(), grad_in.data.begin());
    } else {
      RngStream rng(key_);
      const Real scale = Real(1.0 / (1.0 - p_));
      for (std::size_t i = 0; i < grad_out.data.size(); ++i) {
        const double u = static_cast<double>(rng.at(i) >> 11) * 0x1.0p-53;
        grad_in.data[i] = u >= p_ ? grad_out.data[i] * scale : Real(0);
      }
    }
    phase_ = LayerPhase::kIdle;
  }

  double probability() const { return p_; }

  void discard() { phase_ = LayerPhase::kIdle; }

 private:
  double p_;
  std::uint64_t key_ = 0;
  bool train_ = false;
  LayerPhase phase_ = LayerPhase::kIdle;
};

// ---------------------------------------------------------------------------
// Batch normalization over rows (per feature column). Training mode uses
// batch statistics (biased variance for normalization, unbiased for the
// running estimate, momentum 0.1); eval mode uses the running estimates.

template <typename Real>
class BatchNorm {
 public:
  BatchNorm(std::size_t dim, double momentum = 0.1, double eps = 1e-5)
      : momentum_(momentum), eps_(eps) {
    gamma.resize(1, dim);
    gamma.fill(Real(1));
    beta.resize(1, dim);
    beta.zero();
    g_gamma.resize(1, dim);
    g_gamma.zero();
    g_beta.resize(1, dim);
    g_beta.zero();
    running_mean.resize(1, dim);
    running_mean.zero();
    running_var.resize(1, dim);
    running_var.fill(Real(1));
  }

  void forward(const Matrix<Real>& in, std::size_t rows, bool train, Matrix<Real>& out) {
    require_phase(phase_, LayerPhase::kIdle, "batchnorm forward");
    const std::size_t dim = gamma.cols;
    if (in.cols != dim) throw DimensionError("batchnorm: feature dimension mismatch");
    if (train && rows == 1)
      throw ValidationError("batchnorm: training batch of size 1 has undefined variance");
    out.resize(rows, dim);
    train_ = train;
    xhat_.resize(rows, dim);
    inv_std_.assign(dim, Real(0));
    if (rows == 0) {
      phase_ = LayerPhase::kForwarded;
      return;
    }
    if (train) {
      const double n = static_cast<double>(rows);
      for (std::size_t c = 0; c < dim; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < rows; ++r) mean += static_cast<double>(in.at(r, c));
        mean /= n;
        double var = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
          const double d = static_cast<double>(in.at(r, c)) - mean;
          var += d * d;
        }
        var /= n;
        const double istd = 1.0 / std::sqrt(var + eps_);
        inv_std_[c] = static_cast<Real>(istd);
        for (std::size_t r = 0; r < rows; ++r) {
          const Real xh = static_cast<Real>((static_cast<double>(in.at(r, c)) - mean) * istd);
          xhat_.at(r, c) = xh;
          out.at(r, c) = gamma.data[c] * xh + beta.data[c];
        }
        const double unbiased = rows > 1 ? var * n / (n - 1.0) : var;
        running_mean.data[c] =
            static_cast<Real>((1.0 - momentum_) * running_mean.data[c] + momentum_ * mean);
        running_var.data[c] =
            static_cast<Real>((1.0 - momentum_) * running_var.data[c] + momentum_ * unbiased);
      }
    } else {
      for (std::size_t c = 0; c < dim; ++c) {
        const double istd = 1.0 / std::sqrt(static_cast<double>(running_var.data[c]) + eps_);
        inv_std_[c] = static_cast<Real>(istd);
        for (std::size_t r = 0; r < rows; ++r) {
          const Real xh =
              static_cast<Real>((static_cast<double>(in.at(r, c)) - running_mean.data[c]) * istd);
          xhat_.at(r, c) = xh;
          out.at(r, c) = gamma.data[c] * xh + beta.data[c];
        }
      }
    }
    phase_ = LayerPhase::kForwarded;
  }

  void backward(const Matrix<Real>& grad_out, Matrix<Real>& grad_in) {
    require_phase(phase_, LayerPhase::kForwarded, "batchnorm backward");
    const std::size_t rows = grad_out.rows, dim = gamma.cols;
    grad_in.resize(rows, dim);
    if (rows == 0) {
      phase_ = LayerPhase::kIdle;
      return;
    }
    const double n = static_cast<double>(rows);
    for (std::size_t c = 0; c < dim; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = static_cast<double>(grad_out.at(r, c));
        sum_g += g;
        sum_gx += g * static_cast<double>(xhat_.at(r, c));
      }
      g_gamma.data[c] += static_cast<Real>(sum_gx);
      g_beta.data[c] += static_cast<Real>(sum_g);
      const double k = static_cast<double>(gamma.data[c]) * static_cast<double>(inv_std_[c]);
      if (train_) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double g = static_cast<double>(grad_out.at(r, c));
          const double xh = static_cast<double>(xhat_.at(r, c));
          grad_in.at(r, c) = static_cast<Real>(k * (g - sum_g / n - xh * (sum_gx / n)));
        }
      } else {
        for (std::size_t r = 0; r < rows; ++r)
          grad_in.at(r, c) = static_cast<Real>(k * static_cast<double>(grad_out.at(r, c)));
      }
    }
    phase_ = LayerPhase::kIdle;
  }

  void discard() { phase_ = LayerPhase::kIdle; }

  Matrix<Real> gamma, beta, g_gamma, g_beta;
  Matrix<Real> running_mean, running_var;
  AdamState<Real> adam_gamma, adam_beta;

 private:
  double momentum_, eps_;
  Matrix<Real> xhat_;
  std::vector<Real> inv_std_;
  bool train_ = false;
  LayerPhase phase_ = LayerPhase::kIdle;
};

// ---------------------------------------------------------------------------
// GraphSAGE: h_out[v] = h[v] * W_self + mean_{u in sampled(v)} h[u] * W_neigh.
// Duplicate sampled neighbors count with multiplicity; an empty neighborhood
// aggregates to zero. With the cache, the aggregate is the precomputed
// full-neighbor mean.

template <typename Real>
class SageLayer {
 public:
  SageLayer(std::size_t in_dim, std::size_t out_dim) {
    w_self.resize(in_dim, out_dim);
    w_neigh.resize(in_dim, out_dim);
    g_self.resize(in_dim, out_dim);
    g_self.zero();
    g_neigh.resize(in_dim, out_dim);
    g_neigh.zero();
  }

  void init(std::uint64_t rng_root, std::uint64_t layer_tag) {
    glorot_init(w_self, rng_root, layer_tag * 16 + 0);
    glorot_init(w_neigh, rng_root, layer_tag * 16 + 1);
  }

  void forward(const AggregationInput<Real>& in, const Matrix<Real>& h_in, Matrix<Real>& h_out) {
    require_phase(phase_, LayerPhase::kIdle, "sage forward");
    check_shapes(in, h_in);
    aggregate_mean(in, h_in, agg_);
    matmul(h_in, in.num_dest, w_self, h_out);
    matmul(agg_, in.num_dest, w_neigh, h_out, /*accumulate=*/true);
    phase_ = LayerPhase::kForwarded;
  }

  // h_in must be the same matrix the forward pass consumed.
  void backward(const AggregationInput<Real>& in, const Matrix<Real>& h_in,
                const Matrix<Real>& grad_out, Matrix<Real>& grad_in) {
    require_phase(phase_, LayerPhase::kForwarded, "sage backward");
    matmul_at_b(h_in, grad_out, in.num_dest, g_self, /*accumulate=*/true);
    matmul_at_b(agg_, grad_out, in.num_dest, g_neigh, /*accumulate=*/true);

    grad_in.resize(in.num_src, w_self.rows);
    grad_in.zero();
    matmul_a_bt(grad_out, in.num_dest, w_self, grad_in, /*accumulate=*/true);
    if (!in.use_cache()) {
      matmul_a_bt(grad_out, in.num_dest, w_neigh, grad_agg_);
      const auto& t = *in.topo;
      for (std::uint32_t v = 0; v < in.num_dest; ++v) {
        const std::uint32_t deg = t.dest_in_degree[v];
        if (deg == 0) continue;
        const Real inv = Real(1) / static_cast<Real>(deg);
        const Real* gv = grad_agg_.row(v);
        for (std::uint32_t e = t.csc_offsets[v]; e < t.csc_offsets[v + 1]; ++e) {
          Real* gu = grad_in.row(t.csc_sources[e]);
          for (std::size_t c = 0; c < grad_in.cols; ++c) gu[c] += inv * gv[c];
        }
      }
    }
    phase_ = LayerPhase::kIdle;
  }

  std::vector<ParamRef<Real>> params() {
    return {{"w_self", &w_self, &g_self, &adam_self},
            {"w_neigh", &w_neigh, &g_neigh, &adam_neigh}};
  }

  // Inference forwards have no pending gradient; release the buffers.
  void discard() { phase_ = LayerPhase::kIdle; }

  Matrix<Real> w_self, w_neigh, g_self, g_neigh;
  AdamState<Real> adam_self, adam_neigh;

 private:
  void check_shapes(const AggregationInput<Real>& in, const Matrix<Real>& h_in) const {
    if (h_in.cols != w_self.rows) throw DimensionError("sage: input dimension mismatch");
    if (h_in.rows < in.num_src) throw DimensionError("sage: input rows < source vertices");
    if (in.use_cache() && in.cached->cols != w_self.rows)
      throw DimensionError("sage: cached aggregate dimension mismatch");
  }

  void aggregate_mean(const AggregationInput<Real>& in, const Matrix<Real>& h_in,
                      Matrix<Real>& agg) {
    agg.resize(in.num_dest, h_in.cols);
    if (in.use_cache()) {
      for (std::uint32_t v = 0; v < in.num_dest; ++v)
        std::copy(in.cached->row(v), in.cached->row(v) + h_in.cols, agg.row(v));
      return;
    }
    const auto& t = *in.topo;
    for (std::uint32_t v = 0; v < in.num_dest; ++v) {
      Real* av = agg.row(v);
      std::fill(av, av + agg.cols, Real(0));
      const std::uint32_t deg = t.dest_in_degree[v];
      if (deg == 0) continue;
      for (std::uint32_t e = t.csc_offsets[v]; e < t.csc_offsets[v + 1]; ++e) {
        const Real* hu = h_in.row(t.csc_sources[e]);
        for (std::size_t c = 0; c < agg.cols; ++c) av[c] += hu[c];
      }
      const Real inv = Real(1) / static_cast<Real>(deg);
      for (std::size_t c = 0; c < agg.cols; ++c) av[c] *= inv;
    }
  }

  Matrix<Real> agg_, grad_agg_;
  LayerPhase phase_ = LayerPhase::kIdle;
};

// ---------------------------------------------------------------------------
// GCN with symmetric normalization. Sampled path:
//   a_v = sum_u h[u] / sqrt((did_v + 1)(gd_u + 1)) + h[v] / (did_v + 1)
// with did the sampled in-degree of v and gd the GLOBAL degree of u. The
// cached path replaces the sum with the precomputed global-degree aggregate
// and uses the global degree of v for the self term as well.

template <typename Real>
class GcnLayer {
 public:
  GcnLayer(std::size_t in_dim, std::size_t out_dim) {
    w.resize(in_dim, out_dim);
    g_w.resize(in_dim, out_dim);
    g_w.zero();
  }

  void init(std::uint64_t rng_root, std::uint64_t layer_tag) {
    glorot_init(w, rng_root, layer_tag * 16 + 0);
  }

  void forward(const AggregationInput<Real>& in, const Matrix<Real>& h_in, Matrix<Real>& h_out) {
    require_phase(phase_, LayerPhase::kIdle, "gcn forward");
    if (h_in.cols != w.rows) throw DimensionError("gcn: input dimension mismatch");
    if (h_in.rows < in.num_src) throw DimensionError("gcn: input rows < source vertices");
    if (in.global_degrees == nullptr) throw DimensionError("gcn: global degrees required");
    aggregate(in, h_in, agg_);
    matmul(agg_, in.num_dest, w, h_out);
    phase_ = LayerPhase::kForwarded;
  }

  void backward(const AggregationInput<Real>& in, const Matrix<Real>& /*h_in*/,
                const Matrix<Real>& grad_out, Matrix<Real>& grad_in) {
    require_phase(phase_, LayerPhase::kForwarded, "gcn backward");
    matmul_at_b(agg_, grad_out, in.num_dest, g_w, /*accumulate=*/true);
    matmul_a_bt(grad_out, in.num_dest, w, grad_agg_);

    grad_in.resize(in.num_src, w.rows);
    grad_in.zero();
    for (std::uint32_t v = 0; v < in.num_dest; ++v) {
      const Real cvv = self_coeff(in, v);
      const Real* gv = grad_agg_.row(v);
      Real* sv = grad_in.row(v);
      for (std::size_t c = 0; c < grad_in.cols; ++c) sv[c] += cvv * gv[c];
      if (in.use_cache()) continue;
      const auto& t = *in.topo;
      const double dv = static_cast<double>(t.dest_in_degree[v] + 1);
      for (std::uint32_t e = t.csc_offsets[v]; e < t.csc_offsets[v + 1]; ++e) {
        const std::uint32_t u = t.csc_sources[e];
        const Real cuv = static_cast<Real>(
            1.0 / std::sqrt(dv * static_cast<double>(in.global_degrees[u] + 1)));
        Real* gu = grad_in.row(u);
        for (std::size_t c = 0; c < grad_in.cols; ++c) gu[c] += cuv * gv[c];
      }
    }
    phase_ = LayerPhase::kIdle;
  }

  std::vector<ParamRef<Real>> params() { return {{"w", &w, &g_w, &adam_w}}; }

  void discard() { phase_ = LayerPhase::kIdle; }

  Matrix<Real> w, g_w;
  AdamState<Real> adam_w;

 private:
  Real self_coeff(const AggregationInput<Real>& in, std::uint32_t v) const {
    const std::uint32_t d =
        in.use_cache() ? in.global_degrees[v] : in.topo->dest_in_degree[v];
    return static_cast<Real>(1.0 / static_cast<double>(d + 1));
  }

  void aggregate(const AggregationInput<Real>& in, const Matrix<Real>& h_in, Matrix<Real>& agg) {
    agg.resize(in.num_dest, h_in.cols);
    for (std::uint32_t v = 0; v < in.num_dest; ++v) {
      Real* av = agg.row(v);
      if (in.use_cache()) {
        std::copy(in.cached->row(v), in.cached->row(v) + agg.cols, av);
      } else {
        std::fill(av, av + agg.cols, Real(0));
        const auto& t = *in.topo;
        const double dv = static_cast<double>(t.dest_in_degree[v] + 1);
        for (std::uint32_t e = t.csc_offsets[v]; e < t.csc_offsets[v + 1]; ++e) {
          const std::uint32_t u = t.csc_sources[e];
          const Real cuv = static_cast<Real>(
              1.0 / std::sqrt(dv * static_cast<double>(in.global_degrees[u] + 1)));
          const Real* hu = h_in.row(u);
          for (std::size_t c = 0; c < agg.cols; ++c) av[c] += cuv * hu[c];
        }
      }
      const Real cvv = self_coeff(in, v);
      const Real* hv = h_in.row(v);
      for (std::size_t c = 0; c < agg.cols; ++c) av[c] += cvv * hv[c];
    }
  }

  Matrix<Real> agg_, grad_agg_;
  LayerPhase phase_ = LayerPhase::kIdle;
};

// ---------------------------------------------------------------------------
// 0-epsilon GIN: a_v = h[v] + sum of sampled neighbor features, followed by a
// 2-layer MLP with batch norm + ReLU after the first MLP layer and, except on
// the final network layer, another batch norm + ReLU on the output.

template <typename Real>
class GinLayer {
 public:
  GinLayer(std::size_t in_dim, std::size_t mlp_hidden, std::size_t out_dim,
           bool output_stage, double bn_momentum = 0.1, double bn_eps = 1e-5)
      : bn1_(mlp_hidden, bn_momentum, bn_eps),
        bn2_(output_stage ? out_dim : 1, bn_momentum, bn_eps),
        output_stage_(output_stage) {
    w1.resize(in_dim, mlp_hidden);
    b1.resize(1, mlp_hidden);
    b1.zero();
    w2.resize(mlp_hidden, out_dim);
    b2.resize(1, out_dim);
    b2.zero();
    g_w1.resize(in_dim, mlp_hidden);
    g_w1.zero();
    g_b1.resize(1, mlp_hidden);
    g_b1.zero();
    g_w2.resize(mlp_hidden, out_dim);
    g_w2.zero();
    g_b2.resize(1, out_dim);
    g_b2.zero();
  }

  void init(std::uint64_t rng_root, std::uint64_t layer_tag) {
    glorot_init(w1, rng_root, layer_tag * 16 + 0);
    glorot_init(w2, rng_root, layer_tag * 16 + 1);
  }

  void forward(const AggregationInput<Real>& in, const Matrix<Real>& h_in, bool train,
               Matrix<Real>& h_out) {
    require_phase(phase_, LayerPhase::kIdle, "gin forward");
    if (h_in.cols != w1.rows) throw DimensionError("gin: input dimension mismatch");
    if (h_in.rows < in.num_src) throw DimensionError("gin: input rows < source vertices");
    aggregate_sum(in, h_in, agg_);
    matmul(agg_, in.num_dest, w1, z1_);
    add_bias(z1_, b1);
    bn1_.forward(z1_, in.num_dest, train, h1_);
    relu1_.forward(h1_, in.num_dest, r1_);
    matmul(r1_, in.num_dest, w2, z2_);
    add_bias(z2_, b2);
    if (output_stage_) {
      bn2_.forward(z2_, in.num_dest, train, h2_);
      relu2_.forward(h2_, in.num_dest, h_out);
    } else {
      h_out.resize(in.num_dest, w2.cols);
      std::copy(z2_.data.begin(), z2_.data.begin() + static_cast<std::ptrdiff_t>(in.num_dest * w2.cols),
                h_out.data.begin());
    }
    phase_ = LayerPhase::kForwarded;
  }

  void backward(const AggregationInput<Real>& in, const Matrix<Real>& /*h_in*/,
                const Matrix<Real>& grad_out, Matrix<Real>& grad_in) {
    require_phase(phase_, LayerPhase::kForwarded, "gin backward");
    const Matrix<Real>* g = &grad_out;
    if (output_stage_) {
      relu2_.backward(*g, t2_);
      bn2_.backward(t2_, t3_);
      g = &t3_;
    }
    matmul_at_b(r1_, *g, in.num_dest, g_w2, /*accumulate=*/true);
    add_colsum(*g, in.num_dest, g_b2);
    matmul_a_bt(*g, in.num_dest, w2, t4_);
    relu1_.backward(t4_, t5_);
    bn1_.backward(t5_, t6_);
    matmul_at_b(agg_, t6_, in.num_dest, g_w1, /*accumulate=*/true);
    add_colsum(t6_, in.num_dest, g_b1);
    matmul_a_bt(t6_, in.num_dest, w1, grad_agg_);

    grad_in.resize(in.num_src, w1.rows);
    grad_in.zero();
    for (std::uint32_t v = 0; v < in.num_dest; ++v) {
      const Real* gv = grad_agg_.row(v);
      Real* sv = grad_in.row(v);
      for (std::size_t c = 0; c < grad_in.cols; ++c) sv[c] += gv[c];
      if (in.use_cache()) continue;
      const auto& t = *in.topo;
      for (std::uint32_t e = t.csc_offsets[v]; e < t.csc_offsets[v + 1]; ++e) {
        Real* gu = grad_in.row(t.csc_sources[e]);
        for (std::size_t c = 0; c < grad_in.cols; ++c) gu[c] += gv[c];
      }
    }
    phase_ = LayerPhase::kIdle;
  }

  std::vector<ParamRef<Real>> params() {
    std::vector<ParamRef<Real>> out = {
        {"w1", &w1, &g_w1, &adam_w1},
        {"b1", &b1, &g_b1, &adam_b1},
        {"w2", &w2, &g_w2, &adam_w2},
        {"b2", &b2, &g_b2, &adam_b2},
        {"bn1_gamma", &bn1_.gamma, &bn1_.g_gamma, &bn1_.adam_gamma},
        {"bn1_beta", &bn1_.beta, &bn1_.g_beta, &bn1_.adam_beta},
    };
    if (output_stage_) {
      out.push_back({"bn2_gamma", &bn2_.gamma, &bn2_.g_gamma, &bn2_.adam_gamma});
      out.push_back({"bn2_beta", &bn2_.beta, &bn2_.g_beta, &bn2_.adam_beta});
    }
    return out;
  }

  BatchNorm<Real>& bn1() { return bn1_; }
  BatchNorm<Real>& bn2() { return bn2_; }
  bool has_output_stage() const { return output_stage_; }

  void discard() {
    bn1_.discard();
    relu1_.discard();
    if (output_stage_) {
      bn2_.discard();
      relu2_.discard();
    }
    phase_ = LayerPhase::kIdle;
  }

  Matrix<Real> w1, b1, w2, b2;
  Matrix<Real> g_w1, g_b1, g_w2, g_b2;
  AdamState<Real> adam_w1, adam_b1, adam_w2, adam_b2;

 private:
  static void add_bias(Matrix<Real>& m, const Matrix<Real>& bias) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      Real* row = m.row(r);
      for (std::size_t c = 0; c < m.cols; ++c) row[c] += bias.data[c];
    }
  }
  static void add_colsum(const Matrix<Real>& g, std::size_t rows, Matrix<Real>& out) {
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* row = g.row(r);
      for (std::size_t c = 0; c < g.cols; ++c) out.data[c] += row[c];
    }
  }

  void aggregate_sum(const AggregationInput<Real>& in, const Matrix<Real>& h_in,
                     Matrix<Real>& agg) {
    agg.resize(in.num_dest, h_in.cols);
    for (std::uint32_t v = 0; v < in.num_dest; ++v) {
      Real* av = agg.row(v);
      const Real* hv = h_in.row(v);
      std::copy(hv, hv + agg.cols, av);  // 0-epsilon self addition
      if (in.use_cache()) {
        const Real* cv = in.cached->row(v);
        for (std::size_t c = 0; c < agg.cols; ++c) av[c] += cv[c];
      } else {
        const auto& t = *in.topo;
        for (std::uint32_t e = t.csc_offsets[v]; e < t.csc_offsets[v + 1]; ++e) {
          const Real* hu = h_in.row(t.csc_sources[e]);
          for (std::size_t c = 0; c < agg.cols; ++c) av[c] += hu[c];
        }
      }
    }
  }

  BatchNorm<Real> bn1_, bn2_;
  ReluLayer<Real> relu1_, relu2_;
  bool output_stage_;
  Matrix<Real> agg_, z1_, h1_, r1_, z2_, h2_;
  Matrix<Real> grad_agg_, t2_, t3_, t4_, t5_, t6_;
  LayerPhase phase_ = LayerPhase::kIdle;
};

// ---------------------------------------------------------------------------
// Softmax cross-entropy, mean over the seed rows. Returns the loss and fills
// grad_logits with d(loss)/d(logits).

template <typename Real>
Real softmax_xent(const Matrix<Real>& logits, std::size_t rows, std::span<const std::int32_t> labels,
                  Matrix<Real>& grad_logits) {
  if (labels.size() < rows) throw DimensionError("softmax_xent: labels shorter than rows");
  const std::size_t classes = logits.cols;
  grad_logits.resize(rows, classes);
  if (rows == 0) return Real(0);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* lr = logits.row(r);
    const std::int32_t y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw BoundsError("softmax_xent: label out of range");
    double mx = static_cast<double>(lr[0]);
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(lr[c]));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(static_cast<double>(lr[c]) - mx);
    loss += -(static_cast<double>(lr[static_cast<std::size_t>(y)]) - mx - std::log(z));
    Real* gr = grad_logits.row(r);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(static_cast<double>(lr[c]) - mx) / z;
      gr[c] = static_cast<Real>((p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) * inv_n);
    }
  }
  return static_cast<Real>(loss * inv_n);
}

}  // namespace mbgnn
