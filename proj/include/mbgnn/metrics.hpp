#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mbgnn/fabric.hpp"
#include "mbgnn/trainer.hpp"

namespace mbgnn {

// One key=value line per rank per epoch; the machine-readable side of the
// metrics report. Timing fields are wall-clock and not reproducible; every
// counter field is.
std::string epoch_report_line(const EpochReport& r);
EpochReport parse_epoch_report_line(const std::string& line);

// Closed-form relay-count predictions for an epoch of M minibatches sampled
// in macrobatches of B with feature rounds of F (F == 0 means F = B) over
// `sampled_layers` topology layers.
std::uint64_t predicted_topology_relays(std::uint32_t M, std::uint32_t B,
                                        std::uint32_t sampled_layers);
std::uint64_t predicted_feature_relays(std::uint32_t M, std::uint32_t B, std::uint32_t F);

struct ModelCheckRow {
  std::string name;
  std::uint64_t predicted = 0;
  std::uint64_t measured = 0;
  bool ok() const { return predicted == measured; }
};

// Juxtaposes measured counters with the communication-model predictions.
// Feature-count rows need the per-minibatch vertex-set sizes (sum of |f_i|)
// and per-macrobatch union sizes (sum of |A_k|); pass zero-length when
// unavailable and those rows are omitted.
std::vector<ModelCheckRow> model_check_rows(std::uint32_t M, std::uint32_t B, std::uint32_t F,
                                            std::uint32_t sampled_layers, const CommCounters& c,
                                            std::uint64_t sum_union_sizes = 0,
                                            bool have_union = false);

std::string model_check_table(const std::vector<ModelCheckRow>& rows);

// Human-readable epoch table (one row per rank-epoch line, epoch 3 is the
// headline row by convention).
std::string format_epoch_table(const std::vector<EpochReport>& reports);

}  // namespace mbgnn
