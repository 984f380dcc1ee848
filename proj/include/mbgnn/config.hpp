#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mbgnn/partition.hpp"
#include "mbgnn/sbm.hpp"
#include "mbgnn/trainer.hpp"

namespace mbgnn {

// Flat key=value configuration ('#' starts a comment). CLI flags are applied
// on top with set(), so they override file keys.
class KeyValues {
 public:
  static KeyValues from_file(const std::string& path);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_f64(const std::string& key, double fallback) const;
  const std::map<std::string, std::string>& all() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::vector<std::uint32_t> parse_u32_list(const std::string& text);

struct RunConfig {
  std::string dataset_dir;  // exactly one of dataset_dir / sbm
  bool use_sbm = false;
  SbmSpec sbm;

  int num_ranks = 1;
  PartitionPolicy policy;
  TrainConfig train;

  std::string metrics_out;
  std::string checkpoint_out;
};

// Schema (see README): data, sbm.*, num_ranks, policy, policy_seed,
// direction, model, depth, hidden_dim, num_classes, dropout, bn_momentum,
// bn_eps, lr, beta1, beta2, adam_eps, fans, test_fans, minibatch_size,
// macrobatch_size (int or "all"), feature_round (int or "all"), epochs,
// rng_root, cache, cache_eval, eval_every, metrics_out, checkpoint_out.
RunConfig parse_run_config(const KeyValues& kv);

}  // namespace mbgnn
