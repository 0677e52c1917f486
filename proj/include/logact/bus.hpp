#pragma once

#include <chrono>
#include <vector>

#include "logact/acl.hpp"
#include "logact/types.hpp"

namespace logact {

// The typed, linearizable, append-only shared log. Access control is
// enforced per payload type against the caller's identity on every call.
//
// Semantics:
//  - append assigns dense positions 0..n-1 in a single total order and is
//    durable (per the backend's durability class) before it returns.
//  - read returns entries in [start, end) whose type the caller may read;
//    entries of unreadable types are silently omitted, positions keep.
//  - poll blocks until at least one entry at position >= start with a type
//    in the filter exists, then returns all currently available matches;
//    an expired timeout yields an empty list.
class AgentBus {
 public:
  virtual ~AgentBus() = default;

  virtual LogPosition append(const ClientIdentity& client, const Payload& payload) = 0;
  virtual std::vector<Entry> read(const ClientIdentity& client, LogPosition start,
                                  LogPosition end) const = 0;
  virtual LogPosition tail() const = 0;
  virtual std::vector<Entry> poll(const ClientIdentity& client, LogPosition start,
                                  PayloadTypeSet filter, std::chrono::milliseconds timeout) = 0;

  // Stops the bus: pending polls wake up, later appends raise BusClosed.
  virtual void close() = 0;
};

// One identity bound to one bus; the handle components and tools hold.
struct BusClient {
  AgentBus* bus{nullptr};
  ClientIdentity identity;

  LogPosition append(const Payload& payload) const { return bus->append(identity, payload); }
  std::vector<Entry> read(LogPosition start, LogPosition end) const {
    return bus->read(identity, start, end);
  }
  LogPosition tail() const { return bus->tail(); }
  std::vector<Entry> poll(LogPosition start, PayloadTypeSet filter,
                          std::chrono::milliseconds timeout) const {
    return bus->poll(identity, start, filter, timeout);
  }
};

}  // namespace logact
