// Command-line driver: synthetic graph generation, partitioning, cache
// construction, training, evaluation, and the communication-model report.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mbgnn/agg_cache.hpp"
#include "mbgnn/config.hpp"
#include "mbgnn/metrics.hpp"
#include "mbgnn/session.hpp"

namespace {

using namespace mbgnn;

KeyValues gather_config(const std::string& config_path,
                        const std::vector<std::string>& overrides) {
  KeyValues kv = config_path.empty() ? KeyValues{} : KeyValues::from_file(config_path);
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + item);
    kv.set(item.substr(0, eq), item.substr(eq + 1));
  }
  return kv;
}

int cmd_generate(const KeyValues& kv, const std::string& out_dir) {
  RunConfig rc = parse_run_config(kv);
  if (!rc.use_sbm) throw ConfigError("generate needs sbm.* keys");
  Dataset data = generate_sbm(rc.sbm);
  write_dataset(data, out_dir);
  std::cout << "wrote " << out_dir << ": " << data.graph.num_vertices << " vertices, "
            << data.graph.num_edges() << " directed edges, dim " << data.graph.feature_dim
            << ", " << data.num_classes << " classes\n";
  return 0;
}

int cmd_partition(const KeyValues& kv, const std::string& out_prefix) {
  RunConfig rc = parse_run_config(kv);
  Dataset data = obtain_dataset(rc);
  for (int r = 0; r < rc.num_ranks; ++r) {
    Partition p = partition_graph(data.graph, r, rc.num_ranks, rc.policy);
    dump_partition(p, out_prefix + ".rank" + std::to_string(r) + ".txt");
    std::cout << "rank " << r << ": " << p.num_owned() << " vertices, "
              << p.local_adj_targets.size() << " edges\n";
  }
  return 0;
}

int cmd_build_cache(const KeyValues& kv, const std::string& out_prefix) {
  RunConfig rc = parse_run_config(kv);
  Dataset data = obtain_dataset(rc);
  const AggregatorKind kind = aggregator_for(rc.train.model.kind);
  Fabric fabric(rc.num_ranks);
  std::vector<double> secs(rc.num_ranks);
  fabric.run([&](RankHandle& handle) {
    Partition p = partition_graph(data.graph, handle.rank(), rc.num_ranks, rc.policy);
    scatter_features(data.graph, p);
    AggCache cache = build_cache(handle, p, kind);
    save_cache(cache, p, out_prefix + ".rank" + std::to_string(handle.rank()) + ".bin");
    secs[handle.rank()] = cache.build_seconds;
  });
  for (int r = 0; r < rc.num_ranks; ++r)
    std::cout << "rank " << r << ": cache (" << aggregator_name(kind) << ") built in " << secs[r]
              << "s\n";
  return 0;
}

int cmd_train(const KeyValues& kv) {
  RunConfig rc = parse_run_config(kv);
  Dataset data = obtain_dataset(rc);
  const TrainConfig cfg = resolve_train_config(rc.train, data);

  TrainSessionResult res = run_train(data, rc);

  std::vector<EpochReport> flat;
  for (const auto& per_epoch : res.reports)
    for (const auto& r : per_epoch) flat.push_back(r);
  std::cout << format_epoch_table(flat);
  std::cout << "final test accuracy: " << res.final_accuracy << "\n";
  if (res.cache_build_seconds > 0)
    std::cout << "cache build: " << res.cache_build_seconds << "s\n";

  // Model check against the epoch counters of rank 0, last epoch.
  if (!res.reports.empty()) {
    const auto& last = res.reports.back()[0];
    const std::uint32_t B = cfg.macrobatch_size == 0
                                ? std::max<std::uint32_t>(1, res.minibatches_per_epoch)
                                : cfg.macrobatch_size;
    auto rows = model_check_rows(res.minibatches_per_epoch, B, cfg.feature_round,
                                 res.sampled_layers, last.counters);
    std::cout << "communication model check (rank 0, epoch " << last.epoch << "):\n"
              << model_check_table(rows);
  }

  if (!rc.metrics_out.empty()) {
    std::ofstream out(rc.metrics_out);
    if (!out) throw IoError("cannot write metrics: " + rc.metrics_out);
    const std::uint32_t B = cfg.macrobatch_size == 0
                                ? std::max<std::uint32_t>(1, res.minibatches_per_epoch)
                                : cfg.macrobatch_size;
    out << "#config minibatches=" << res.minibatches_per_epoch << " macrobatch=" << B
        << " feature_round=" << cfg.feature_round << " sampled_layers=" << res.sampled_layers
        << " num_ranks=" << rc.num_ranks << "\n";
    for (const auto& r : flat) out << epoch_report_line(r) << "\n";
    std::cout << "metrics written to " << rc.metrics_out << "\n";
  }
  if (!rc.checkpoint_out.empty()) {
    std::ofstream out(rc.checkpoint_out, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + rc.checkpoint_out);
    out.write(reinterpret_cast<const char*>(res.checkpoint.data()),
              static_cast<std::streamsize>(res.checkpoint.size()));
    std::cout << "checkpoint written to " << rc.checkpoint_out << "\n";
  }
  return 0;
}

int cmd_evaluate(const KeyValues& kv, const std::string& checkpoint) {
  RunConfig rc = parse_run_config(kv);
  Dataset data = obtain_dataset(rc);
  const TrainConfig cfg = resolve_train_config(rc.train, data);
  const bool need_cache = cfg.cache_eval == CacheEvalMode::kOn ||
                          (cfg.use_cache && cfg.model.kind == ModelKind::kGin);

  Fabric fabric(rc.num_ranks);
  std::vector<double> acc(rc.num_ranks);
  fabric.run([&](RankHandle& handle) {
    Partition p = partition_graph(data.graph, handle.rank(), rc.num_ranks, rc.policy);
    scatter_features(data.graph, p);
    AggCache cache;
    if (need_cache) cache = build_cache(handle, p, aggregator_for(cfg.model.kind));
    Model model = Model::load_checkpoint(checkpoint);
    acc[handle.rank()] = evaluate(handle, p, model, need_cache ? &cache : nullptr, cfg, 0);
  });
  std::cout << "test accuracy: " << acc[0] << "\n";
  return 0;
}

int cmd_report(const std::string& metrics_path) {
  std::ifstream in(metrics_path);
  if (!in) throw IoError("cannot open metrics: " + metrics_path);
  std::string line;
  std::uint32_t M = 0, B = 1, F = 0, L = 0;
  std::vector<EpochReport> reports;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("#config", 0) == 0) {
      std::istringstream is(line.substr(7));
      std::string tok;
      while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = tok.substr(0, eq);
        const auto v = std::stoul(tok.substr(eq + 1));
        if (k == "minibatches") M = static_cast<std::uint32_t>(v);
        if (k == "macrobatch") B = static_cast<std::uint32_t>(v);
        if (k == "feature_round") F = static_cast<std::uint32_t>(v);
        if (k == "sampled_layers") L = static_cast<std::uint32_t>(v);
      }
      continue;
    }
    reports.push_back(parse_epoch_report_line(line));
  }
  std::cout << format_epoch_table(reports);
  if (M > 0 && !reports.empty()) {
    std::cout << "communication model check (per rank-epoch):\n";
    bool all_ok = true;
    for (const auto& r : reports) {
      auto rows = model_check_rows(M, B, F, L, r.counters);
      for (const auto& row : rows) all_ok = all_ok && row.ok();
    }
    auto rows = model_check_rows(M, B, F, L, reports.front().counters);
    std::cout << model_check_table(rows);
    std::cout << (all_ok ? "all rank-epoch rows match the model\n"
                         : "MISMATCH in at least one rank-epoch row\n");
    return all_ok ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale multi-rank GNN training with macrobatch sampling"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "dataset", out_prefix = "partition", checkpoint,
               metrics_path;
  std::vector<std::string> overrides;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--set", overrides, "override a config key (key=value), repeatable");
  };

  auto* gen = app.add_subcommand("generate", "write a synthetic SBM dataset directory");
  add_common(gen);
  gen->add_option("--out", out_dir, "output dataset directory");

  auto* part = app.add_subcommand("partition", "dump per-rank edge-cut partitions");
  add_common(part);
  part->add_option("--out-prefix", out_prefix, "dump file prefix");

  auto* cachec = app.add_subcommand("build-cache", "build and save the aggregation cache");
  add_common(cachec);
  cachec->add_option("--out-prefix", out_prefix, "cache file prefix");

  auto* train = app.add_subcommand("train", "run distributed training");
  add_common(train);

  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint file")->required();

  auto* report = app.add_subcommand("report", "format a metrics file and check the model");
  report->add_option("--metrics", metrics_path, "metrics file from train")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(gather_config(config_path, overrides), out_dir);
    if (part->parsed()) return cmd_partition(gather_config(config_path, overrides), out_prefix);
    if (cachec->parsed()) return cmd_build_cache(gather_config(config_path, overrides), out_prefix);
    if (train->parsed()) return cmd_train(gather_config(config_path, overrides));
    if (eval->parsed()) return cmd_evaluate(gather_config(config_path, overrides), checkpoint);
    if (report->parsed()) return cmd_report(metrics_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
