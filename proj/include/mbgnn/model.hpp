#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mbgnn/agg_cache.hpp"
#include "mbgnn/layers.hpp"
#include "mbgnn/subgraph.hpp"

namespace mbgnn {

enum class ModelKind { kSage, kGcn, kGin };

const char* model_name(ModelKind k);
ModelKind model_from_name(const std::string& name);
AggregatorKind aggregator_for(ModelKind k);

struct ModelConfig {
  ModelKind kind = ModelKind::kSage;
  std::uint32_t depth = 3;
  std::uint32_t in_dim = 0;
  std::uint32_t hidden_dim = 256;
  std::uint32_t num_classes = 0;
  double dropout = 0.5;  // applied after all but the last layer; GIN ignores
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  AdamConfig adam;
};

// Identifies one gradient step's RNG context (dropout masks).
struct StepKey {
  std::uint32_t epoch = 0;
  int rank = 0;
  std::uint32_t minibatch = 0;  // absolute index within the epoch
};

// A stack of native layers over one sampled subgraph. Computational layer c
// consumes sampling layer depth-c+1, whose destination set is a local-ID
// prefix, so activations are plain row prefixes of reused buffers. When the
// subgraph carries cached aggregates (one sampling layer fewer), the first
// computational layer reads them instead of aggregating edges.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t rng_root);

  const ModelConfig& config() const { return cfg_; }

  // Forward through all layers; logits() afterwards holds one row per seed.
  void forward(const SampledSubgraph& sg, const StepKey& key, bool train);
  const Matrix<float>& logits() const { return *logits_; }

  // Mean seed cross-entropy on the pending forward's logits, then the full
  // backward chain; gradients ACCUMULATE. Returns the loss.
  float backward(const SampledSubgraph& sg);

  float forward_backward(const SampledSubgraph& sg, const StepKey& key);

  void zero_grads();
  void adam_step();
  std::uint64_t step_count() const { return step_; }

  std::size_t num_param_elements() const;
  void grads_to_flat(std::vector<float>& out) const;
  void grads_from_flat(const std::vector<float>& in);
  std::uint64_t param_hash() const;

  Bytes serialize() const;
  static Model deserialize(const Bytes& bytes);
  void save_checkpoint(const std::string& path) const;
  static Model load_checkpoint(const std::string& path);

  std::vector<ParamRef<float>> params();
  std::vector<ParamRef<float>> params() const;

 private:
  AggregationInput<float> layer_input(const SampledSubgraph& sg, std::uint32_t c,
                                      bool cached_plan) const;
  void check_subgraph(const SampledSubgraph& sg, bool& cached_plan) const;

  ModelConfig cfg_;
  std::uint64_t rng_root_ = 0;
  std::uint64_t step_ = 0;

  std::vector<SageLayer<float>> sage_;
  std::vector<GcnLayer<float>> gcn_;
  std::vector<GinLayer<float>> gin_;
  std::vector<ReluLayer<float>> relu_;
  std::vector<DropoutLayer<float>> dropout_;

  // Activation chain buffers, reused across minibatches.
  std::vector<Matrix<float>> layer_out_;
  std::vector<Matrix<float>> relu_out_;
  std::vector<Matrix<float>> act_;
  Matrix<float> grad_a_, grad_b_;
  const Matrix<float>* logits_ = nullptr;

  // Saved forward bindings consumed by backward.
  struct ForwardCtx {
    const SampledSubgraph* sg = nullptr;
    bool cached_plan = false;
    bool train = false;
    std::vector<const Matrix<float>*> inputs;  // h_in per computational layer
  } fwd_;
};

// argmax per row; ties resolve to the lowest class index.
std::vector<std::int32_t> argmax_rows(const Matrix<float>& logits, std::size_t rows);

}  // namespace mbgnn
