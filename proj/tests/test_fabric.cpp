#include <doctest.h>

#include "mbgnn/fabric.hpp"
#include "mbgnn/rng.hpp"

using namespace mbgnn;

namespace {

Bytes ids_payload(std::initializer_list<std::uint32_t> ids) {
  Bytes b;
  ByteWriter w(b);
  for (auto v : ids) w.u32(v);
  return b;
}

}  // namespace

TEST_SUITE("fabric") {

TEST_CASE("all-empty relay bumps the relay counter and moves no bytes") {
  Fabric f(3);
  f.run([](RankHandle& h) {
    std::vector<Bytes> reqs(3);
    auto resp = h.relay(RelayKind::kTopology, reqs, [](int, const Bytes&) { return Bytes{}; });
    for (auto& r : resp) CHECK(r.empty());
  });
  for (int r = 0; r < 3; ++r) {
    const auto c = f.snapshot_counters(r);
    CHECK(c.relays == 1);
    CHECK(c.topo_relays == 1);
    CHECK(c.payload_bytes == 0);
    CHECK(c.incidental_bytes == 0);
    CHECK(c.messages == 0);
  }
}

TEST_CASE("echo relay: byte accounting matches 2 x 3 x id size") {
  Fabric f(2);
  f.run([](RankHandle& h) {
    std::vector<Bytes> reqs(2);
    if (h.rank() == 0) reqs[1] = ids_payload({10, 11, 12});
    auto resp =
        h.relay(RelayKind::kFeature, reqs, [](int, const Bytes& req) { return req; });
    if (h.rank() == 0) {
      ByteReader r(resp[1]);
      CHECK(r.u32() == 10);
      CHECK(r.u32() == 11);
      CHECK(r.u32() == 12);
      CHECK(r.done());
    }
  });
  const auto c0 = f.snapshot_counters(0);
  const auto c1 = f.snapshot_counters(1);
  CHECK(c0.payload_bytes == 3 * sizeof(std::uint32_t));  // request it sent
  CHECK(c1.payload_bytes == 3 * sizeof(std::uint32_t));  // response it served
  CHECK(c0.payload_bytes + c1.payload_bytes == 2 * 3 * sizeof(std::uint32_t));
  CHECK(c0.incidental_bytes == kMessageHeaderBytes);
  CHECK(c1.incidental_bytes == kMessageHeaderBytes);
  CHECK(c0.relays == 1);
  CHECK(c1.relays == 1);
}

TEST_CASE("self-addressed requests are served without wire traffic") {
  Fabric f(2);
  f.run([](RankHandle& h) {
    std::vector<Bytes> reqs(2);
    reqs[h.rank()] = ids_payload({static_cast<std::uint32_t>(h.rank() + 100)});
    auto resp = h.relay(RelayKind::kTopology, reqs, [](int, const Bytes& req) { return req; });
    ByteReader r(resp[h.rank()]);
    CHECK(r.u32() == static_cast<std::uint32_t>(h.rank() + 100));
  });
  for (int r = 0; r < 2; ++r) {
    CHECK(f.snapshot_counters(r).payload_bytes == 0);
    CHECK(f.snapshot_counters(r).messages == 0);
  }
}

TEST_CASE("handler order and response routing") {
  // Every rank asks every rank (including itself) to add 1000*server to each id.
  const int P = 4;
  Fabric f(P);
  f.run([P](RankHandle& h) {
    std::vector<Bytes> reqs(P);
    for (int d = 0; d < P; ++d) reqs[d] = ids_payload({static_cast<std::uint32_t>(h.rank())});
    auto resp = h.relay(RelayKind::kTopology, reqs, [&](int, const Bytes& req) {
      ByteReader r(req);
      Bytes out;
      ByteWriter w(out);
      while (!r.done()) w.u32(r.u32() + 1000 * static_cast<std::uint32_t>(h.rank()));
      return out;
    });
    for (int d = 0; d < P; ++d) {
      ByteReader r(resp[d]);
      CHECK(r.u32() == static_cast<std::uint32_t>(h.rank()) + 1000 * static_cast<std::uint32_t>(d));
    }
  });
}

TEST_CASE("all_to_all routes payloads and conserves bytes") {
  SUBCASE("one rank identity") {
    Fabric f(1);
    f.run([](RankHandle& h) {
      std::vector<Bytes> payloads{ids_payload({7})};
      auto got = h.all_to_all(RelayKind::kControl, payloads);
      CHECK(got[0] == payloads[0]);
    });
    CHECK(f.snapshot_counters(0).relays == 1);
    CHECK(f.snapshot_counters(0).payload_bytes == 0);
  }
  SUBCASE("two ranks exchange one row each") {
    Fabric f(2);
    f.run([](RankHandle& h) {
      std::vector<Bytes> payloads(2);
      payloads[1 - h.rank()] = ids_payload({static_cast<std::uint32_t>(h.rank())});
      auto got = h.all_to_all(RelayKind::kControl, payloads);
      ByteReader r(got[1 - h.rank()]);
      CHECK(r.u32() == static_cast<std::uint32_t>(1 - h.rank()));
    });
  }
  SUBCASE("random payload sizes: sum sent == sum received") {
    const int P = 4;
    Fabric f(P);
    std::vector<std::uint64_t> sent(P), received(P);
    f.run([&](RankHandle& h) {
      RngStream rng({99, static_cast<std::uint64_t>(h.rank())});
      std::vector<Bytes> payloads(P);
      std::uint64_t s = 0;
      for (int d = 0; d < P; ++d) {
        payloads[d].resize(rng.next_below(100));
        if (d != h.rank()) s += payloads[d].size();
      }
      auto got = h.all_to_all(RelayKind::kControl, payloads);
      std::uint64_t rcv = 0;
      for (int d = 0; d < P; ++d)
        if (d != h.rank()) rcv += got[d].size();
      sent[h.rank()] = s;
      received[h.rank()] = rcv;
    });
    std::uint64_t total_sent = 0, total_received = 0, counted = 0;
    for (int r = 0; r < P; ++r) {
      total_sent += sent[r];
      total_received += received[r];
      counted += f.snapshot_counters(r).payload_bytes;
    }
    CHECK(total_sent == total_received);
    CHECK(counted == total_sent);
  }
}

TEST_CASE("snapshot and reset") {
  Fabric f(2);
  f.run([](RankHandle& h) {
    std::vector<Bytes> reqs(2);
    if (h.rank() == 0) reqs[1] = ids_payload({1});
    h.relay(RelayKind::kTopology, reqs, [](int, const Bytes& req) { return req; });
    CHECK(h.snapshot_counters().relays == 1);
    h.reset_counters();
    CHECK(h.snapshot_counters().relays == 0);
    CHECK(h.snapshot_counters().payload_bytes == 0);
  });
}

TEST_CASE("handler failure aborts the relay on every rank") {
  Fabric f(2);
  CHECK_THROWS_AS(f.run([](RankHandle& h) {
    std::vector<Bytes> reqs(2);
    reqs[1] = ids_payload({1});
    h.relay(RelayKind::kTopology, reqs, [&](int, const Bytes& req) -> Bytes {
      if (h.rank() == 1) throw std::runtime_error("boom");
      return req;
    });
  }),
                  ProtocolError);
}

TEST_CASE("mismatched collective kinds are a protocol error") {
  Fabric f(2);
  CHECK_THROWS_AS(f.run([](RankHandle& h) {
    std::vector<Bytes> reqs(2);
    if (h.rank() == 0)
      h.relay(RelayKind::kTopology, reqs, [](int, const Bytes& b) { return b; });
    else
      h.relay(RelayKind::kFeature, reqs, [](int, const Bytes& b) { return b; });
  }),
                  ProtocolError);
}

TEST_CASE("relay counters stay identical across ranks") {
  const int P = 3;
  Fabric f(P);
  f.run([P](RankHandle& h) {
    for (int round = 0; round < 5; ++round) {
      std::vector<Bytes> reqs(P);
      reqs[(h.rank() + 1) % P] = ids_payload({static_cast<std::uint32_t>(round)});
      h.relay(RelayKind::kTopology, reqs, [](int, const Bytes& b) { return b; });
    }
    h.all_to_all(RelayKind::kGradient, std::vector<Bytes>(P));
  });
  for (int r = 0; r < P; ++r) {
    CHECK(f.snapshot_counters(r).relays == 6);
    CHECK(f.snapshot_counters(r).topo_relays == 5);
    CHECK(f.snapshot_counters(r).grad_relays == 1);
  }
}

}  // TEST_SUITE
