#include "mbgnn/session.hpp"

namespace mbgnn {

TrainConfig resolve_train_config(const TrainConfig& cfg, const Dataset& data) {
  TrainConfig out = cfg;
  if (out.model.num_classes == 0) out.model.num_classes = data.num_classes;
  if (out.model.in_dim == 0) out.model.in_dim = data.graph.feature_dim;
  out.validate();
  return out;
}

Dataset obtain_dataset(const RunConfig& rc) {
  return rc.use_sbm ? generate_sbm(rc.sbm) : load_dataset(rc.dataset_dir);
}

TrainSessionResult run_train(const Dataset& data, const RunConfig& rc, TrainObserver* observer,
                             bool final_eval) {
  const TrainConfig cfg = resolve_train_config(rc.train, data);
  const int P = rc.num_ranks;
  const bool need_cache = cfg.use_cache || cfg.cache_eval == CacheEvalMode::kOn;

  TrainSessionResult result;
  result.reports.assign(cfg.epochs, std::vector<EpochReport>(P));
  result.sampled_layers = cfg.use_cache ? cfg.model.depth - 1 : cfg.model.depth;
  std::vector<double> accuracy(P, -1.0);
  std::vector<double> cache_seconds(P, 0.0);

  Fabric fabric(P);
  fabric.run([&](RankHandle& handle) {
    const int rank = handle.rank();
    Partition part = partition_graph(data.graph, rank, P, rc.policy);
    scatter_features(data.graph, part);

    AggCache cache;
    if (need_cache) {
      cache = build_cache(handle, part, aggregator_for(cfg.model.kind));
      cache_seconds[rank] = cache.build_seconds;
    }
    const AggCache* cache_ptr = need_cache ? &cache : nullptr;

    Model model(cfg.model, cfg.rng_root);
    for (std::uint32_t e = 1; e <= cfg.epochs; ++e) {
      result.reports[e - 1][rank] =
          train_epoch(handle, part, model, cache_ptr, cfg, e, observer);
    }
    if (final_eval)
      accuracy[rank] = evaluate(handle, part, model, cache_ptr, cfg, cfg.epochs + 1);
    if (rank == 0) result.checkpoint = model.serialize();
  });

  result.final_accuracy = accuracy[0];
  result.cache_build_seconds = cache_seconds[0];
  if (!result.reports.empty()) result.minibatches_per_epoch = result.reports[0][0].minibatches;
  return result;
}

}  // namespace mbgnn
