#pragma once

#include <cstdint>
#include <vector>

#include "mbgnn/agg_cache.hpp"
#include "mbgnn/fabric.hpp"
#include "mbgnn/model.hpp"
#include "mbgnn/partition.hpp"
#include "mbgnn/sampler.hpp"

namespace mbgnn {

enum class CacheEvalMode { kAuto, kOn, kOff };

struct TrainConfig {
  ModelConfig model;
  std::vector<std::uint32_t> fans;       // outermost first; length == model.depth
  std::vector<std::uint32_t> test_fans;  // empty = 20 per layer, except GIN reuses fans
  std::uint32_t minibatch_size = 1024;
  std::uint32_t macrobatch_size = 0;  // 0 = all minibatches of the epoch
  std::uint32_t feature_round = 0;    // F; 0 = macrobatch size
  std::uint32_t epochs = 1;
  std::uint64_t rng_root = 1;
  bool use_cache = false;
  CacheEvalMode cache_eval = CacheEvalMode::kAuto;  // auto: GIN only
  std::uint32_t eval_every = 0;  // evaluate after every N epochs; 0 = never
  bool reset_counters_each_epoch = true;

  void validate() const;
  std::vector<std::uint32_t> effective_test_fans() const;
};

// Per-phase seconds mirror the subgraph-prep/compute breakdown; they are
// reported but never asserted. Counter fields are deterministic.
struct EpochReport {
  std::uint32_t epoch = 0;
  int rank = 0;
  std::uint32_t minibatches = 0;
  double topo_seconds = 0, feat_seconds = 0, export_seconds = 0;
  double forward_seconds = 0, backward_seconds = 0;
  CommCounters counters;
  float mean_loss = 0;
  double test_accuracy = -1.0;  // < 0: not evaluated this epoch
  std::vector<std::uint64_t> step_param_hashes;
};

// Test hook. Callbacks arrive on rank threads; implementations must write to
// per-rank slots.
struct TrainObserver {
  virtual ~TrainObserver() = default;
  virtual void on_subgraph(int /*rank*/, std::uint32_t /*epoch*/, std::uint32_t /*minibatch*/,
                           const SampledSubgraph& /*sg*/) {}
  virtual void on_step(int /*rank*/, std::uint32_t /*epoch*/, std::uint32_t /*minibatch*/,
                       const std::vector<float>& /*local_grad*/,
                       const std::vector<float>& /*reduced_grad*/, std::uint64_t /*param_hash*/) {}
};

// Minibatches per epoch, agreed across ranks: the smallest per-rank count
// under the drop-last rule, so every rank issues the same collectives.
std::uint32_t epoch_minibatch_count(const Partition& p, std::uint32_t minibatch_size);

// One epoch: seed selection, macrobatch sampling (cache plan if enabled),
// per-minibatch forward/backward, gradient all-reduce (mean, fixed rank
// order), Adam step. All ranks hold bit-identical parameters after every
// step. Collective.
EpochReport train_epoch(RankHandle& handle, const Partition& p, Model& model,
                        const AggCache* cache, const TrainConfig& cfg, std::uint32_t epoch,
                        TrainObserver* observer = nullptr);

// Samples test-vertex subgraphs with the test fans, dropout off, batch norm
// in eval mode; returns global correct/total across ranks. The cache is used
// only for GIN unless overridden. Collective.
double evaluate(RankHandle& handle, const Partition& p, Model& model, const AggCache* cache,
                const TrainConfig& cfg, std::uint32_t eval_tag);

// Mean of all ranks' vectors, summed in rank order on every rank.
std::vector<float> allreduce_mean(RankHandle& handle, const std::vector<float>& local);

}  // namespace mbgnn
