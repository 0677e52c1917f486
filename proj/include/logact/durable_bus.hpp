#pragma once

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "logact/bus.hpp"
#include "logact/clock.hpp"

namespace logact {

enum class SyncMode : std::uint8_t {
  Always,   // fsync before every append returns
  Batched,  // group fsyncs on a background interval (default 5 ms)
};

struct DurableBusOptions {
  SyncMode sync_mode{SyncMode::Always};
  std::uint64_t batch_interval_ms{5};
  bool read_only{false};
  std::shared_ptr<Clock> clock;  // defaults to the system clock
};

// Per-type byte/entry accounting for a bus handle's view of the log.
struct BusAccounting {
  std::array<std::uint64_t, kPayloadTypeCount> payload_bytes{};
  std::array<std::uint64_t, kPayloadTypeCount> entry_count{};

  std::uint64_t total_payload_bytes() const;
};

// Durable single-file AgentBus backend. One file is the whole log; the
// record framing is documented bit-exactly in docs/formats.md. Appends
// from any number of handles (threads or processes) are serialized under
// an exclusive file lock, so position assignment stays linearizable.
// Readers follow the file without locking; a torn final record is
// invisible until repaired, corruption anywhere else raises CorruptLog.
class DurableBus final : public AgentBus {
 public:
  static std::unique_ptr<DurableBus> open(const std::filesystem::path& path,
                                          DurableBusOptions options = {});

  ~DurableBus() override;

  LogPosition append(const ClientIdentity& client, const Payload& payload) override;
  std::vector<Entry> read(const ClientIdentity& client, LogPosition start,
                          LogPosition end) const override;
  LogPosition tail() const override;
  std::vector<Entry> poll(const ClientIdentity& client, LogPosition start, PayloadTypeSet filter,
                          std::chrono::milliseconds timeout) override;
  void close() override;

  void flush();

  const std::filesystem::path& path() const { return path_; }
  BusAccounting accounting() const;

  DurableBus(const DurableBus&) = delete;
  DurableBus& operator=(const DurableBus&) = delete;

 private:
  DurableBus() = default;

  // Scans records from scanned_size_ to EOF; repairs or ignores a torn tail.
  void refresh_locked() const;
  std::vector<Entry> collect_locked(LogPosition start, PayloadTypeSet filter) const;

  std::filesystem::path path_;
  DurableBusOptions options_;
  int fd_{-1};
  mutable std::mutex mutex_;
  std::condition_variable appended_;
  mutable std::vector<Entry> entries_;
  mutable std::uint64_t scanned_size_{0};
  mutable bool magic_ok_{false};
  mutable std::uint64_t last_ts_{0};
  mutable BusAccounting accounting_;
  bool closed_{false};

  std::atomic<bool> dirty_{false};
  std::mutex flush_mutex_;
  std::condition_variable_any flush_cv_;
  std::jthread flusher_;
};

}  // namespace logact
