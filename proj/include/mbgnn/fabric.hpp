#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "mbgnn/common.hpp"

namespace mbgnn {

// Per-rank communication counters. Written only by the owning rank's thread;
// monotonically non-decreasing within an epoch, reset at epoch boundaries on
// request.
//
// Byte accounting: payload_bytes counts every byte this rank SENDS to another
// rank (requests it issues, responses it serves, all-to-all payloads), so
// summing over ranks gives total traffic. incidental_bytes adds the fixed
// kMessageHeaderBytes per message sent. Self-addressed data never touches the
// wire and is not counted. Feature-vector counters are incremented by the
// fetch path on the RECEIVING side (a "fetch" is counted where the row lands).
struct CommCounters {
  std::uint64_t relays = 0;
  std::uint64_t topo_relays = 0;
  std::uint64_t feat_relays = 0;
  std::uint64_t grad_relays = 0;
  std::uint64_t other_relays = 0;

  std::uint64_t features_fetched_remote = 0;
  std::uint64_t features_fetched_total = 0;

  std::uint64_t payload_bytes = 0;
  std::uint64_t topo_payload_bytes = 0;
  std::uint64_t feat_payload_bytes = 0;
  std::uint64_t incidental_bytes = 0;
  std::uint64_t messages = 0;

  bool operator==(const CommCounters&) const = default;
};

enum class RelayKind { kTopology, kFeature, kGradient, kControl };

// Fixed per-message header charge: type, src, length, tag.
constexpr std::uint64_t kMessageHeaderBytes = 16;

class Fabric;

// Handle a rank's program holds while running inside Fabric::run().
class RankHandle {
 public:
  RankHandle(Fabric& fabric, int rank) : fabric_(fabric), rank_(rank) {}

  int rank() const { return rank_; }
  int num_ranks() const;

  // Collective request/response round. requests[d] is the payload for rank d
  // (empty = no message). Every rank's handler serves the requests addressed
  // to it, and the returned vector holds one response per rank this rank sent
  // a request to. No rank returns before all requests it must serve are
  // served. Handler exceptions abort the relay on every rank.
  using Handler = std::function<Bytes(int src_rank, const Bytes& request)>;
  std::vector<Bytes> relay(RelayKind kind, const std::vector<Bytes>& requests,
                           const Handler& handler);

  // Collective payload exchange: the result holds payloads[s -> this rank]
  // from every rank s. Counted as one relay.
  std::vector<Bytes> all_to_all(RelayKind kind, const std::vector<Bytes>& payloads);

  CommCounters& counters();
  CommCounters snapshot_counters() const;
  void reset_counters();

 private:
  Fabric& fabric_;
  int rank_;
};

// In-process multi-rank fabric. One thread of control per rank; ranks
// interact only through collectives that advance in lockstep phases. Message
// slots are per-(src, dst) and each phase writes disjoint slots, so runs are
// deterministic for fixed inputs regardless of thread scheduling.
class Fabric {
 public:
  explicit Fabric(int num_ranks);

  // Runs fn(handle) on num_ranks threads and joins them. The first exception
  // thrown by any rank is rethrown here after all threads unwind.
  void run(const std::function<void(RankHandle&)>& fn);

  int num_ranks() const { return num_ranks_; }
  CommCounters snapshot_counters(int rank) const;
  void reset_counters(int rank);

 private:
  friend class RankHandle;

  // Barrier that can be poisoned: when a rank fails, every waiter wakes and
  // throws instead of deadlocking.
  class AbortableBarrier {
   public:
    explicit AbortableBarrier(int parties) : parties_(parties) {}
    void arrive_and_wait();
    void poison(const std::string& reason);

   private:
    std::mutex m_;
    std::condition_variable cv_;
    int parties_;
    int arrived_ = 0;
    std::uint64_t generation_ = 0;
    bool poisoned_ = false;
    std::string reason_;
  };

  void bump_relay(int rank, RelayKind kind);
  void count_send(int rank, RelayKind kind, std::size_t payload_size);
  std::vector<Bytes> collect_row(std::vector<std::vector<Bytes>>& box, int dst);

  int num_ranks_;
  AbortableBarrier barrier_;
  std::vector<std::vector<Bytes>> request_box_;   // [src][dst]
  std::vector<std::vector<Bytes>> response_box_;  // [server][requester]
  std::vector<int> op_tag_;                       // collective discipline check
  std::vector<CommCounters> counters_;
  std::mutex error_mutex_;
  std::string pending_error_;
};

}  // namespace mbgnn
