#include "mbgnn/metrics.hpp"

#include <cstdio>
#include <map>
#include <sstream>

namespace mbgnn {

std::string epoch_report_line(const EpochReport& r) {
  std::ostringstream os;
  os << "epoch=" << r.epoch << " rank=" << r.rank << " minibatches=" << r.minibatches
     << " loss=" << r.mean_loss;
  if (r.test_accuracy >= 0) os << " test_acc=" << r.test_accuracy;
  os << " topo_relays=" << r.counters.topo_relays << " feat_relays=" << r.counters.feat_relays
     << " grad_relays=" << r.counters.grad_relays << " relays=" << r.counters.relays
     << " feats_remote=" << r.counters.features_fetched_remote
     << " feats_total=" << r.counters.features_fetched_total
     << " payload_bytes=" << r.counters.payload_bytes
     << " topo_payload_bytes=" << r.counters.topo_payload_bytes
     << " feat_payload_bytes=" << r.counters.feat_payload_bytes
     << " incidental_bytes=" << r.counters.incidental_bytes
     << " messages=" << r.counters.messages << " topo_s=" << r.topo_seconds
     << " feat_s=" << r.feat_seconds << " export_s=" << r.export_seconds
     << " fwd_s=" << r.forward_seconds << " bwd_s=" << r.backward_seconds;
  return os.str();
}

EpochReport parse_epoch_report_line(const std::string& line) {
  std::map<std::string, std::string> kv;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto u64 = [&](const char* k) -> std::uint64_t {
    auto it = kv.find(k);
    return it == kv.end() ? 0 : std::stoull(it->second);
  };
  auto f64 = [&](const char* k) -> double {
    auto it = kv.find(k);
    return it == kv.end() ? 0.0 : std::stod(it->second);
  };
  EpochReport r;
  r.epoch = static_cast<std::uint32_t>(u64("epoch"));
  r.rank = static_cast<int>(u64("rank"));
  r.minibatches = static_cast<std::uint32_t>(u64("minibatches"));
  r.mean_loss = static_cast<float>(f64("loss"));
  r.test_accuracy = kv.count("test_acc") ? f64("test_acc") : -1.0;
  r.counters.topo_relays = u64("topo_relays");
  r.counters.feat_relays = u64("feat_relays");
  r.counters.grad_relays = u64("grad_relays");
  r.counters.relays = u64("relays");
  r.counters.features_fetched_remote = u64("feats_remote");
  r.counters.features_fetched_total = u64("feats_total");
  r.counters.payload_bytes = u64("payload_bytes");
  r.counters.topo_payload_bytes = u64("topo_payload_bytes");
  r.counters.feat_payload_bytes = u64("feat_payload_bytes");
  r.counters.incidental_bytes = u64("incidental_bytes");
  r.counters.messages = u64("messages");
  r.topo_seconds = f64("topo_s");
  r.feat_seconds = f64("feat_s");
  r.export_seconds = f64("export_s");
  r.forward_seconds = f64("fwd_s");
  r.backward_seconds = f64("bwd_s");
  return r;
}

std::uint64_t predicted_topology_relays(std::uint32_t M, std::uint32_t B,
                                        std::uint32_t sampled_layers) {
  if (M == 0) return 0;
  const std::uint64_t macro = (M + B - 1) / B;
  return macro * sampled_layers;
}

std::uint64_t predicted_feature_relays(std::uint32_t M, std::uint32_t B, std::uint32_t F) {
  if (M == 0) return 0;
  std::uint64_t total = 0;
  for (std::uint32_t first = 0; first < M; first += B) {
    const std::uint32_t count = std::min(B, M - first);
    const std::uint32_t f = F == 0 ? count : std::min(F, count);
    total += (count + f - 1) / f;
  }
  return total;
}

std::vector<ModelCheckRow> model_check_rows(std::uint32_t M, std::uint32_t B, std::uint32_t F,
                                            std::uint32_t sampled_layers, const CommCounters& c,
                                            std::uint64_t sum_union_sizes, bool have_union) {
  std::vector<ModelCheckRow> rows;
  rows.push_back({"topology_relays", predicted_topology_relays(M, B, sampled_layers),
                  c.topo_relays});
  rows.push_back({"feature_relays", predicted_feature_relays(M, B, F), c.feat_relays});
  if (have_union)
    rows.push_back({"feature_vectors_fetched", sum_union_sizes, c.features_fetched_total});
  return rows;
}

std::string model_check_table(const std::vector<ModelCheckRow>& rows) {
  std::ostringstream os;
  os << "  metric                      predicted     measured  status\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "  %-24s %12llu %12llu  %s\n", r.name.c_str(),
                  static_cast<unsigned long long>(r.predicted),
                  static_cast<unsigned long long>(r.measured), r.ok() ? "ok" : "MISMATCH");
    os << buf;
  }
  return os.str();
}

std::string format_epoch_table(const std::vector<EpochReport>& reports) {
  std::ostringstream os;
  os << "epoch rank |   topo   feat export    fwd    bwd  total | t.rly f.rly "
        "feat_rem feat_tot    payload | loss    acc\n";
  for (const auto& r : reports) {
    const double total =
        r.topo_seconds + r.feat_seconds + r.export_seconds + r.forward_seconds + r.backward_seconds;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%5u %4d | %6.2f %6.2f %6.2f %6.2f %6.2f %6.2f | %5llu %5llu %8llu %8llu %10llu "
                  "| %.4f %s%s\n",
                  r.epoch, r.rank, r.topo_seconds, r.feat_seconds, r.export_seconds,
                  r.forward_seconds, r.backward_seconds, total,
                  static_cast<unsigned long long>(r.counters.topo_relays),
                  static_cast<unsigned long long>(r.counters.feat_relays),
                  static_cast<unsigned long long>(r.counters.features_fetched_remote),
                  static_cast<unsigned long long>(r.counters.features_fetched_total),
                  static_cast<unsigned long long>(r.counters.payload_bytes), r.mean_loss,
                  r.test_accuracy >= 0 ? std::to_string(r.test_accuracy).c_str() : "-",
                  r.epoch == 3 ? "  <- headline" : "");
    os << buf;
  }
  os << "(timing columns are wall-clock and not deterministic; counters are)\n";
  return os.str();
}

}  // namespace mbgnn
