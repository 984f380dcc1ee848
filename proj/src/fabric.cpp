#include "mbgnn/fabric.hpp"

#include <exception>

namespace mbgnn {

void Fabric::AbortableBarrier::arrive_and_wait() {
  std::unique_lock<std::mutex> lock(m_);
  if (poisoned_) throw ProtocolError("fabric aborted: " + reason_);
  const std::uint64_t gen = generation_;
  if (++arrived_ == parties_) {
    arrived_ = 0;
    ++generation_;
    cv_.notify_all();
    return;
  }
  cv_.wait(lock, [&] { return generation_ != gen || poisoned_; });
  if (poisoned_) throw ProtocolError("fabric aborted: " + reason_);
}

void Fabric::AbortableBarrier::poison(const std::string& reason) {
  std::lock_guard<std::mutex> lock(m_);
  if (!poisoned_) {
    poisoned_ = true;
    reason_ = reason;
  }
  cv_.notify_all();
}

Fabric::Fabric(int num_ranks)
    : num_ranks_(num_ranks),
      barrier_(num_ranks),
      request_box_(num_ranks, std::vector<Bytes>(num_ranks)),
      response_box_(num_ranks, std::vector<Bytes>(num_ranks)),
      op_tag_(num_ranks, -1),
      counters_(num_ranks) {
  if (num_ranks < 1) throw ConfigError("fabric needs at least one rank");
}

void Fabric::run(const std::function<void(RankHandle&)>& fn) {
  std::vector<std::thread> threads;
  threads.reserve(num_ranks_);
  std::vector<std::exception_ptr> errors(num_ranks_);
  for (int r = 0; r < num_ranks_; ++r) {
    threads.emplace_back([&, r] {
      RankHandle handle(*this, r);
      try {
        fn(handle);
      } catch (const std::exception& e) {
        errors[r] = std::current_exception();
        barrier_.poison(std::string("rank ") + std::to_string(r) + ": " + e.what());
      } catch (...) {
        errors[r] = std::current_exception();
        barrier_.poison("rank " + std::to_string(r) + ": unknown error");
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void Fabric::bump_relay(int rank, RelayKind kind) {
  auto& c = counters_[rank];
  c.relays++;
  switch (kind) {
    case RelayKind::kTopology: c.topo_relays++; break;
    case RelayKind::kFeature: c.feat_relays++; break;
    case RelayKind::kGradient: c.grad_relays++; break;
    case RelayKind::kControl: c.other_relays++; break;
  }
}

void Fabric::count_send(int rank, RelayKind kind, std::size_t payload_size) {
  auto& c = counters_[rank];
  c.messages++;
  c.incidental_bytes += kMessageHeaderBytes;
  c.payload_bytes += payload_size;
  if (kind == RelayKind::kTopology) c.topo_payload_bytes += payload_size;
  if (kind == RelayKind::kFeature) c.feat_payload_bytes += payload_size;
}

int RankHandle::num_ranks() const { return fabric_.num_ranks(); }

CommCounters& RankHandle::counters() { return fabric_.counters_[rank_]; }

CommCounters RankHandle::snapshot_counters() const { return fabric_.counters_[rank_]; }

void RankHandle::reset_counters() { fabric_.counters_[rank_] = CommCounters{}; }

std::vector<Bytes> RankHandle::relay(RelayKind kind, const std::vector<Bytes>& requests,
                                     const Handler& handler) {
  Fabric& f = fabric_;
  const int P = f.num_ranks_;
  if (static_cast<int>(requests.size()) != P)
    throw ProtocolError("relay: request map must have one slot per rank");

  // Deposit phase: publish requests, charge outbound messages.
  f.op_tag_[rank_] = static_cast<int>(kind);
  f.bump_relay(rank_, kind);
  for (int d = 0; d < P; ++d) {
    f.request_box_[rank_][d] = requests[d];
    if (d != rank_ && !requests[d].empty()) f.count_send(rank_, kind, requests[d].size());
  }
  f.barrier_.arrive_and_wait();

  // Serve phase: every rank answers the requests addressed to it, in source
  // order. Response slots are per-(server, requester), so writes are disjoint.
  for (int s = 0; s < P; ++s) {
    if (f.op_tag_[s] != static_cast<int>(kind))
      throw ProtocolError("relay: collective kind mismatch across ranks");
  }
  try {
    for (int s = 0; s < P; ++s) {
      const Bytes& req = f.request_box_[s][rank_];
      if (req.empty()) continue;
      Bytes resp = handler(s, req);
      if (s != rank_) f.count_send(rank_, kind, resp.size());
      f.response_box_[rank_][s] = std::move(resp);
    }
  } catch (const std::exception& e) {
    {
      std::lock_guard<std::mutex> lock(f.error_mutex_);
      if (f.pending_error_.empty())
        f.pending_error_ = "relay handler on rank " + std::to_string(rank_) + ": " + e.what();
    }
    f.barrier_.arrive_and_wait();
    throw ProtocolError(f.pending_error_);
  }
  f.barrier_.arrive_and_wait();

  // Collect phase. The error check comes first so a handler failure anywhere
  // aborts every rank.
  {
    std::lock_guard<std::mutex> lock(f.error_mutex_);
    if (!f.pending_error_.empty()) throw ProtocolError(f.pending_error_);
  }
  std::vector<Bytes> responses(P);
  for (int d = 0; d < P; ++d) {
    if (!requests[d].empty()) responses[d] = std::move(f.response_box_[d][rank_]);
  }
  return responses;
}

std::vector<Bytes> RankHandle::all_to_all(RelayKind kind, const std::vector<Bytes>& payloads) {
  Fabric& f = fabric_;
  const int P = f.num_ranks_;
  if (static_cast<int>(payloads.size()) != P)
    throw ProtocolError("all_to_all: payload map must have one slot per rank");

  f.op_tag_[rank_] = 100 + static_cast<int>(kind);
  f.bump_relay(rank_, kind);
  for (int d = 0; d < P; ++d) {
    f.request_box_[rank_][d] = payloads[d];
    if (d != rank_ && !payloads[d].empty()) f.count_send(rank_, kind, payloads[d].size());
  }
  f.barrier_.arrive_and_wait();

  for (int s = 0; s < P; ++s) {
    if (f.op_tag_[s] != 100 + static_cast<int>(kind))
      throw ProtocolError("all_to_all: collective kind mismatch across ranks");
  }
  std::vector<Bytes> received(P);
  for (int s = 0; s < P; ++s) received[s] = f.request_box_[s][rank_];
  f.barrier_.arrive_and_wait();
  return received;
}

CommCounters Fabric::snapshot_counters(int rank) const { return counters_[rank]; }

void Fabric::reset_counters(int rank) { counters_[rank] = CommCounters{}; }

}  // namespace mbgnn
