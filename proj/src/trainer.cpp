#include "mbgnn/trainer.hpp"

#include <chrono>
#include <iostream>

namespace mbgnn {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (fans.size() != model.depth)
    throw ConfigError("fans length " + std::to_string(fans.size()) + " != model depth " +
                      std::to_string(model.depth));
  if (!test_fans.empty() && test_fans.size() != model.depth)
    throw ConfigError("test_fans length != model depth");
  if (minibatch_size == 0) throw ConfigError("minibatch_size must be positive");
  if (model.dropout < 0.0 || model.dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

std::vector<std::uint32_t> TrainConfig::effective_test_fans() const {
  if (!test_fans.empty()) return test_fans;
  if (model.kind == ModelKind::kGin) return fans;  // GIN is sensitive to the train-time fans
  return std::vector<std::uint32_t>(model.depth, 20);
}

std::uint32_t epoch_minibatch_count(const Partition& p, std::uint32_t minibatch_size) {
  if (p.train_count_per_rank.empty()) throw ValidationError("partition lacks train counts");
  std::uint32_t m = UINT32_MAX;
  for (std::uint32_t c : p.train_count_per_rank)
    m = std::min(m, c / minibatch_size);
  return m == UINT32_MAX ? 0 : m;
}

std::vector<float> allreduce_mean(RankHandle& handle, const std::vector<float>& local) {
  const int P = handle.num_ranks();
  std::vector<Bytes> payloads(P);
  Bytes mine(local.size() * sizeof(float));
  std::memcpy(mine.data(), local.data(), mine.size());
  for (int d = 0; d < P; ++d) payloads[d] = mine;
  auto received = handle.all_to_all(RelayKind::kGradient, payloads);

  std::vector<float> acc(local.size(), 0.0f);
  for (int s = 0; s < P; ++s) {
    if (received[s].size() != mine.size())
      throw ProtocolError("allreduce: gradient size differs across ranks");
    const float* g = reinterpret_cast<const float*>(received[s].data());
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  }
  const float inv = 1.0f / static_cast<float>(P);
  for (float& v : acc) v *= inv;
  return acc;
}

EpochReport train_epoch(RankHandle& handle, const Partition& p, Model& model,
                        const AggCache* cache, const TrainConfig& cfg, std::uint32_t epoch,
                        TrainObserver* observer) {
  cfg.validate();
  if (cfg.use_cache) {
    if (cache == nullptr) throw ConfigError("cache enabled but not built");
    if (cache->kind != aggregator_for(cfg.model.kind))
      throw ConfigError(std::string("cache aggregator ") + aggregator_name(cache->kind) +
                        " does not match model " + model_name(cfg.model.kind));
  }
  if (cfg.reset_counters_each_epoch) handle.reset_counters();

  EpochReport report;
  report.epoch = epoch;
  report.rank = handle.rank();

  auto seeds = select_seeds(p, epoch, cfg.minibatch_size, cfg.rng_root);
  const std::uint32_t M = epoch_minibatch_count(p, cfg.minibatch_size);
  if (seeds.size() < M) throw ProtocolError("rank has fewer minibatches than the agreed count");
  const std::uint32_t B = cfg.macrobatch_size == 0 ? std::max<std::uint32_t>(M, 1)
                                                   : cfg.macrobatch_size;
  const SamplingPlan plan = cfg.use_cache ? plan_with_cache(cfg.model.depth)
                                          : plan_without_cache(cfg.model.depth);
  report.minibatches = M;

  double loss_sum = 0.0;
  std::vector<float> local_grad, reduced;
  const std::uint32_t num_macro = M == 0 ? 0 : (M + B - 1) / B;
  for (std::uint32_t k = 0; k < num_macro; ++k) {
    const std::uint32_t first = k * B;
    const std::uint32_t count = std::min(B, M - first);
    const std::uint32_t F = cfg.feature_round == 0 ? count : std::min(cfg.feature_round, count);
    Macrobatch mb = make_macrobatch(
        p, std::span<const std::vector<VertexId>>(seeds.data() + first, count), epoch, k, first,
        F, rng_domain::kSample, plan);

    auto t0 = Clock::now();
    for (std::uint32_t layer = 1; layer <= plan.sampled_layers; ++layer)
      sample_layer(handle, p, mb, layer, cfg.fans[layer - 1], cfg.rng_root);
    report.topo_seconds += seconds_since(t0);

    std::vector<SampledSubgraph> pending;
    pending.reserve(count);
    for (std::uint32_t r = 0; r < mb.num_feature_rounds(); ++r) {
      t0 = Clock::now();
      FeatureTable table = fetch_features(handle, p, cache, mb, r);
      report.feat_seconds += seconds_since(t0);
      t0 = Clock::now();
      auto built = build_subgraphs(p, mb, r, table);
      report.export_seconds += seconds_since(t0);
      for (auto& sg : built) pending.push_back(std::move(sg));
    }

    // Train the macrobatch's minibatches in order; sampling was batched but
    // the step sequence is unchanged.
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t mb_abs = first + i;
      const SampledSubgraph& sg = pending[i];
      if (observer) observer->on_subgraph(handle.rank(), epoch, mb_abs, sg);

      model.zero_grads();
      const StepKey key{epoch, handle.rank(), mb_abs};
      t0 = Clock::now();
      model.forward(sg, key, /*train=*/true);
      report.forward_seconds += seconds_since(t0);
      t0 = Clock::now();
      const float loss = model.backward(sg);
      report.backward_seconds += seconds_since(t0);
      loss_sum += loss;

      model.grads_to_flat(local_grad);
      reduced = allreduce_mean(handle, local_grad);
      model.grads_from_flat(reduced);
      model.adam_step();
      const std::uint64_t h = model.param_hash();
      report.step_param_hashes.push_back(h);
      if (observer) observer->on_step(handle.rank(), epoch, mb_abs, local_grad, reduced, h);
    }
  }

  report.mean_loss = M == 0 ? 0.0f : static_cast<float>(loss_sum / M);
  if (cfg.eval_every != 0 && (epoch % cfg.eval_every) == 0)
    report.test_accuracy = evaluate(handle, p, model, cache, cfg, epoch);
  report.counters = handle.snapshot_counters();
  return report;
}

double evaluate(RankHandle& handle, const Partition& p, Model& model, const AggCache* cache,
                const TrainConfig& cfg, std::uint32_t eval_tag) {
  cfg.validate();
  bool eval_cache = false;
  switch (cfg.cache_eval) {
    case CacheEvalMode::kAuto:
      eval_cache = cfg.use_cache && cfg.model.kind == ModelKind::kGin;
      break;
    case CacheEvalMode::kOn: eval_cache = cfg.use_cache; break;
    case CacheEvalMode::kOff: eval_cache = false; break;
  }
  if (eval_cache && cache == nullptr) throw ConfigError("cache eval requested but cache missing");

  // Owned test vertices in ascending order; the last partial minibatch is
  // kept (no gradient sync to diverge). Ranks pad with empty minibatches to
  // the global maximum so collectives stay aligned.
  std::vector<VertexId> test;
  for (std::uint32_t i = 0; i < p.num_owned(); ++i)
    if (p.local_test_mask[i]) test.push_back(p.owned_vertices[i]);

  std::uint32_t max_minibatches = 0;
  for (std::uint32_t c : p.test_count_per_rank)
    max_minibatches = std::max(max_minibatches, (c + cfg.minibatch_size - 1) / cfg.minibatch_size);

  std::vector<std::vector<VertexId>> lists(max_minibatches);
  for (std::uint32_t m = 0; m < max_minibatches; ++m) {
    const std::size_t b = static_cast<std::size_t>(m) * cfg.minibatch_size;
    if (b < test.size()) {
      lists[m].assign(test.begin() + static_cast<std::ptrdiff_t>(b),
                      test.begin() + static_cast<std::ptrdiff_t>(std::min(test.size(),
                                                                          b + cfg.minibatch_size)));
    }
  }

  const SamplingPlan plan = eval_cache ? plan_with_cache(cfg.model.depth)
                                       : plan_without_cache(cfg.model.depth);
  Macrobatch mb = make_macrobatch(p, lists, eval_tag, 0, 0,
                                  std::max<std::uint32_t>(1, max_minibatches),
                                  rng_domain::kEval, plan);
  const auto fans = cfg.effective_test_fans();
  auto subgraphs = run_macrobatch(handle, p, eval_cache ? cache : nullptr, mb, fans, cfg.rng_root);

  std::uint64_t correct = 0, total = 0;
  for (std::uint32_t i = 0; i < subgraphs.size(); ++i) {
    const SampledSubgraph& sg = subgraphs[i];
    if (sg.num_seeds() == 0) continue;
    model.forward(sg, StepKey{eval_tag, handle.rank(), i}, /*train=*/false);
    const auto pred = argmax_rows(model.logits(), sg.num_seeds());
    for (std::uint32_t s = 0; s < sg.num_seeds(); ++s) {
      total++;
      if (pred[s] == sg.labels[s]) correct++;
    }
  }

  // Global correct/total.
  std::vector<Bytes> payloads(handle.num_ranks());
  {
    Bytes b;
    ByteWriter w(b);
    w.u64(correct);
    w.u64(total);
    for (auto& pl : payloads) pl = b;
  }
  auto received = handle.all_to_all(RelayKind::kControl, payloads);
  std::uint64_t gc = 0, gt = 0;
  for (auto& b : received) {
    ByteReader r(b);
    gc += r.u64();
    gt += r.u64();
  }
  if (gt == 0) {
    if (handle.rank() == 0) std::cerr << "evaluate: no test vertices, accuracy defined as 0\n";
    return 0.0;
  }
  return static_cast<double>(gc) / static_cast<double>(gt);
}

}  // namespace mbgnn
