#pragma once

#include <cstdint>
#include <vector>

#include "mbgnn/config.hpp"
#include "mbgnn/metrics.hpp"
#include "mbgnn/sbm.hpp"
#include "mbgnn/trainer.hpp"

namespace mbgnn {

struct TrainSessionResult {
  std::vector<std::vector<EpochReport>> reports;  // [epoch][rank]
  double final_accuracy = -1.0;
  Bytes checkpoint;  // identical on every rank; serialized from rank 0
  double cache_build_seconds = 0.0;
  std::uint32_t minibatches_per_epoch = 0;
  std::uint32_t sampled_layers = 0;
};

// Fills in num_classes/in_dim from the dataset when the config leaves them 0.
TrainConfig resolve_train_config(const TrainConfig& cfg, const Dataset& data);

// Full pipeline on an in-memory dataset: spin up the rank fabric, partition,
// scatter, build the cache when enabled, train all epochs, then evaluate.
TrainSessionResult run_train(const Dataset& data, const RunConfig& rc,
                             TrainObserver* observer = nullptr, bool final_eval = true);

Dataset obtain_dataset(const RunConfig& rc);

}  // namespace mbgnn
