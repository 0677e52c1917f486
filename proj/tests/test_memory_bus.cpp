#include <algorithm>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "logact/errors.hpp"
#include "logact/kernel.hpp"
#include "logact/memory_bus.hpp"
#include "logact/serde.hpp"

using namespace logact;

namespace {

ClientIdentity admin() { return role_identity(Role::Admin, "admin"); }

ClientIdentity full_access(const std::string& id) {
  Permissions p;
  p.appendable = PayloadTypeSet::all();
  p.readable = PayloadTypeSet::all();
  p.pollable = PayloadTypeSet::all();
  return {id, p};
}

}  // namespace

TEST_CASE("first append on a fresh bus returns position 0") {
  MemoryBus bus;
  CHECK(bus.tail() == 0);
  CHECK(bus.append(full_access("a"), MailBody{"a", "hi"}) == 0);
  CHECK(bus.tail() == 1);
}

TEST_CASE("append outside the appendable set is denied") {
  MemoryBus bus;
  ClientIdentity voter{"v", Permissions{{PayloadType::Vote},
                                        {PayloadType::Intent, PayloadType::Vote},
                                        {PayloadType::Intent}}};
  CHECK_THROWS_AS(
      bus.append(voter, IntentBody{{ActionSpec::Kind::Shell, "rm", "."}, 0, 0}), Error);
  CHECK(bus.tail() == 0);
  CHECK_NOTHROW(bus.append(voter, VoteBody{0, "rule", "v", Verdict::Approve, "ok"}));
}

TEST_CASE("two appends read back byte-identical in order") {
  MemoryBus bus;
  ClientIdentity id = full_access("a");
  Payload first = MailBody{"a", "one"};
  Payload second = InfOutBody{"two", false};
  CHECK(bus.append(id, first) == 0);
  CHECK(bus.append(id, second) == 1);
  auto entries = bus.read(id, 0, 2);
  REQUIRE(entries.size() == 2);
  CHECK(serialize_payload(entries[0].payload) == serialize_payload(first));
  CHECK(serialize_payload(entries[1].payload) == serialize_payload(second));
}

TEST_CASE("read semantics: empty range, acl filtering, read past tail") {
  MemoryBus bus;
  ClientIdentity id = full_access("a");
  CHECK(bus.read(id, 0, 0).empty());
  CHECK_THROWS_AS(bus.read(id, 3, 1), Error);

  bus.append(id, IntentBody{{ActionSpec::Kind::Shell, "ls", "."}, 0, 0});
  bus.append(id, VoteBody{0, "rule", "r", Verdict::Approve, "ok"});

  ClientIdentity intent_only{"i", Permissions{{}, {PayloadType::Intent}, {PayloadType::Intent}}};
  auto entries = bus.read(intent_only, 0, 2);
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].position == 0);  // positions are not renumbered

  CHECK(bus.read(id, 0, 100).size() == 2);  // past tail, no error
}

TEST_CASE("tail counts all appends") {
  MemoryBus bus;
  ClientIdentity id = full_access("a");
  for (int i = 0; i < 3; ++i) bus.append(id, MailBody{"a", "m"});
  CHECK(bus.tail() == 3);
}

TEST_CASE("poll filters by type and respects start position") {
  MemoryBus bus;
  ClientIdentity id = full_access("a");
  bus.append(id, IntentBody{{ActionSpec::Kind::Shell, "x", "."}, 0, 0});

  // no matching type: timeout, empty
  CHECK(bus.poll(id, 0, {PayloadType::Vote}, std::chrono::milliseconds(50)).empty());

  bus.append(id, MailBody{"a", "m"});
  bus.append(id, IntentBody{{ActionSpec::Kind::Shell, "y", "."}, 0, 0});
  // Intent@0 and Intent@2 exist; start=2 sees only the later one.
  auto entries = bus.poll(id, 2, {PayloadType::Intent}, std::chrono::milliseconds(0));
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].position == 2);

  CHECK_THROWS_AS(bus.poll(id, 0, {}, std::chrono::milliseconds(0)), Error);
  ClientIdentity narrow{"n", Permissions{{}, {PayloadType::Mail}, {PayloadType::Mail}}};
  CHECK_THROWS_AS(bus.poll(narrow, 0, {PayloadType::Intent}, std::chrono::milliseconds(0)),
                  Error);
}

TEST_CASE("poll rendezvous: a blocked poller wakes on append") {
  MemoryBus bus;
  ClientIdentity id = full_access("a");
  for (int i = 0; i < 4; ++i) bus.append(id, MailBody{"a", "filler"});

  std::vector<Entry> got;
  std::thread poller([&] {
    got = bus.poll(id, 0, {PayloadType::Commit}, std::chrono::seconds(5));
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  bus.append(id, CommitBody{1});
  poller.join();
  REQUIRE(got.size() == 1);
  CHECK(got[0].position == 4);
  CHECK(std::get<CommitBody>(got[0].payload).intent_position == 1);
}

TEST_CASE("concurrent appenders get a dense gap-free total order") {
  MemoryBus bus;
  constexpr int kThreads = 8;
  constexpr int kPerThread = 500;
  std::vector<std::thread> threads;
  std::vector<std::vector<LogPosition>> seen(kThreads);
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&, t] {
      ClientIdentity id = full_access("t" + std::to_string(t));
      for (int i = 0; i < kPerThread; ++i) {
        seen[t].push_back(bus.append(id, MailBody{id.client_id, std::to_string(i)}));
      }
    });
  }
  for (auto& t : threads) t.join();

  CHECK(bus.tail() == kThreads * kPerThread);
  std::set<LogPosition> all;
  for (const auto& positions : seen) {
    for (LogPosition p : positions) CHECK(all.insert(p).second);  // no duplicates
  }
  CHECK(*all.rbegin() == kThreads * kPerThread - 1);  // no gaps
  // read-your-writes and immutability: every position holds one entry
  auto entries = bus.read(full_access("r"), 0, bus.tail());
  REQUIRE(entries.size() == kThreads * kPerThread);
  std::uint64_t last_ts = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    CHECK(entries[i].position == i);
    CHECK(entries[i].realtime_ts >= last_ts);
    last_ts = entries[i].realtime_ts;
  }
}

TEST_CASE("acl soundness under randomized permissions and call sequences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    MemoryBus bus;
    ClientIdentity writer = full_access("w");
    std::vector<ClientIdentity> clients;
    for (int c = 0; c < 4; ++c) {
      Permissions p;
      for (int t = 0; t < kPayloadTypeCount; ++t) {
        auto type = static_cast<PayloadType>(t);
        if (rng() & 1) p.appendable.insert(type);
        if (rng() & 1) p.readable.insert(type);
      }
      for (PayloadType type : p.readable.to_vector()) {
        if (rng() & 1) p.pollable.insert(type);
      }
      clients.push_back({"c" + std::to_string(c), p});
    }

    for (int op = 0; op < 60; ++op) {
      const ClientIdentity& client = clients[rng() % clients.size()];
      auto type = static_cast<PayloadType>(rng() % kPayloadTypeCount);
      Payload payload;
      switch (type) {
        case PayloadType::Mail: payload = MailBody{"m", "x"}; break;
        case PayloadType::Vote: payload = VoteBody{0, "t", "i", Verdict::Approve, ""}; break;
        case PayloadType::Commit: payload = CommitBody{0}; break;
        default: payload = MailBody{"m", "y"}; break;
      }
      type = payload_type(payload);
      if (rng() % 3 == 0) {
        if (client.permissions.appendable.contains(type)) {
          CHECK_NOTHROW(bus.append(client, payload));
        } else {
          CHECK_THROWS_AS(bus.append(client, payload), Error);
        }
      } else {
        auto entries = bus.read(client, 0, bus.tail());
        for (const Entry& entry : entries) {
          CHECK(client.permissions.readable.contains(payload_type(entry.payload)));
        }
      }
    }
  }
}

TEST_CASE("closed bus refuses appends and wakes pollers") {
  MemoryBus bus;
  ClientIdentity id = admin();
  std::thread poller([&] {
    auto got = bus.poll(id, 0, {PayloadType::Mail}, std::chrono::seconds(10));
    CHECK(got.empty());
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  bus.close();
  poller.join();
  CHECK_THROWS_AS(bus.append(id, MailBody{"a", "late"}), Error);
}
