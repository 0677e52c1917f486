#pragma once

#include <condition_variable>
#include <memory>
#include <mutex>
#include <vector>

#include "logact/bus.hpp"
#include "logact/clock.hpp"

namespace logact {

// In-memory AgentBus backend. No durability; shared across threads.
class MemoryBus final : public AgentBus {
 public:
  explicit MemoryBus(std::shared_ptr<Clock> clock = nullptr);

  LogPosition append(const ClientIdentity& client, const Payload& payload) override;
  std::vector<Entry> read(const ClientIdentity& client, LogPosition start,
                          LogPosition end) const override;
  LogPosition tail() const override;
  std::vector<Entry> poll(const ClientIdentity& client, LogPosition start, PayloadTypeSet filter,
                          std::chrono::milliseconds timeout) override;
  void close() override;

 private:
  std::shared_ptr<Clock> clock_;
  mutable std::mutex mutex_;
  std::condition_variable appended_;
  std::vector<Entry> entries_;
  std::uint64_t last_ts_{0};
  bool closed_{false};
};

}  // namespace logact
