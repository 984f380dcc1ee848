#include "mbgnn/config.hpp"

#include <fstream>
#include <sstream>

namespace mbgnn {

KeyValues KeyValues::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected key=value");
    kv.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return kv;
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (...) {
    throw ConfigError("key " + key + ": expected integer, got \"" + it->second + "\"");
  }
}

double KeyValues::get_f64(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw ConfigError("key " + key + ": expected number, got \"" + it->second + "\"");
  }
}

std::vector<std::uint32_t> parse_u32_list(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(static_cast<std::uint32_t>(std::stoul(item)));
    } catch (...) {
      throw ConfigError("expected comma-separated integers, got \"" + text + "\"");
    }
  }
  return out;
}

namespace {

std::uint32_t batch_key(const KeyValues& kv, const std::string& key) {
  const std::string v = kv.get(key, "all");
  if (v == "all") return 0;
  try {
    const auto n = std::stoul(v);
    if (n == 0) throw ConfigError(key + " must be positive or \"all\"");
    return static_cast<std::uint32_t>(n);
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    throw ConfigError("key " + key + ": expected integer or \"all\"");
  }
}

}  // namespace

RunConfig parse_run_config(const KeyValues& kv) {
  RunConfig rc;
  rc.dataset_dir = kv.get("data", "");
  const bool has_sbm = kv.has("sbm.blocks") || kv.has("sbm.block_size");
  if (rc.dataset_dir.empty() == !has_sbm)
    throw ConfigError("exactly one of data=DIR or sbm.* generator keys must be present");
  rc.use_sbm = has_sbm;
  if (has_sbm) {
    const auto blocks = static_cast<std::uint32_t>(kv.get_u64("sbm.blocks", 2));
    const auto size = static_cast<std::uint32_t>(kv.get_u64("sbm.block_size", 500));
    rc.sbm.block_sizes.assign(blocks, size);
    rc.sbm.p_intra = kv.get_f64("sbm.p_intra", 0.2);
    rc.sbm.p_inter = kv.get_f64("sbm.p_inter", 0.01);
    rc.sbm.noise_dims = static_cast<std::uint32_t>(kv.get_u64("sbm.noise_dims", 6));
    rc.sbm.noise_stddev = kv.get_f64("sbm.noise_stddev", 0.1);
    rc.sbm.train_fraction = kv.get_f64("sbm.train_fraction", 0.8);
    rc.sbm.seed = kv.get_u64("sbm.seed", 7);
  }

  rc.num_ranks = static_cast<int>(kv.get_u64("num_ranks", 1));
  if (rc.num_ranks < 1) throw ConfigError("num_ranks must be at least 1");
  const std::string policy = kv.get("policy", "hash");
  if (policy == "hash")
    rc.policy.kind = OwnerPolicy::kSeededHash;
  else if (policy == "modulo")
    rc.policy.kind = OwnerPolicy::kModulo;
  else
    throw ConfigError("policy must be hash or modulo");
  rc.policy.seed = kv.get_u64("policy_seed", 0);
  const std::string dir = kv.get("direction", "out");
  if (dir == "out")
    rc.policy.direction = SamplingDirection::kOut;
  else if (dir == "in")
    rc.policy.direction = SamplingDirection::kIn;
  else
    throw ConfigError("direction must be out or in");

  TrainConfig& t = rc.train;
  t.model.kind = model_from_name(kv.get("model", "sage"));
  t.model.depth = static_cast<std::uint32_t>(kv.get_u64("depth", 3));
  t.model.hidden_dim = static_cast<std::uint32_t>(kv.get_u64("hidden_dim", 256));
  t.model.num_classes = static_cast<std::uint32_t>(kv.get_u64("num_classes", 0));
  t.model.dropout = kv.get_f64("dropout", t.model.kind == ModelKind::kGin ? 0.0 : 0.5);
  t.model.bn_momentum = kv.get_f64("bn_momentum", 0.1);
  t.model.bn_eps = kv.get_f64("bn_eps", 1e-5);
  t.model.adam.lr = kv.get_f64("lr", 0.003);
  t.model.adam.beta1 = kv.get_f64("beta1", 0.9);
  t.model.adam.beta2 = kv.get_f64("beta2", 0.999);
  t.model.adam.eps = kv.get_f64("adam_eps", 1e-8);

  t.fans = parse_u32_list(kv.get("fans", "15,10,5"));
  if (kv.has("test_fans")) t.test_fans = parse_u32_list(kv.get("test_fans", ""));
  t.minibatch_size = static_cast<std::uint32_t>(kv.get_u64("minibatch_size", 1024));
  t.macrobatch_size = batch_key(kv, "macrobatch_size");
  t.feature_round = batch_key(kv, "feature_round");
  t.epochs = static_cast<std::uint32_t>(kv.get_u64("epochs", 1));
  t.rng_root = kv.get_u64("rng_root", 1);
  const std::string cache = kv.get("cache", "off");
  if (cache == "on")
    t.use_cache = true;
  else if (cache == "off")
    t.use_cache = false;
  else
    throw ConfigError("cache must be on or off");
  const std::string ce = kv.get("cache_eval", "auto");
  if (ce == "auto")
    t.cache_eval = CacheEvalMode::kAuto;
  else if (ce == "on")
    t.cache_eval = CacheEvalMode::kOn;
  else if (ce == "off")
    t.cache_eval = CacheEvalMode::kOff;
  else
    throw ConfigError("cache_eval must be auto, on or off");
  t.eval_every = static_cast<std::uint32_t>(kv.get_u64("eval_every", 0));

  rc.metrics_out = kv.get("metrics_out", "");
  rc.checkpoint_out = kv.get("checkpoint_out", "");
  return rc;
}

}  // namespace mbgnn
