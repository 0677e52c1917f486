#include "logact/memory_bus.hpp"

#include <algorithm>

#include "logact/errors.hpp"

namespace logact {

MemoryBus::MemoryBus(std::shared_ptr<Clock> clock)
    : clock_(clock ? std::move(clock) : SystemClock::instance()) {}

LogPosition MemoryBus::append(const ClientIdentity& client, const Payload& payload) {
  PayloadType type = payload_type(payload);
  if (!client.permissions.appendable.contains(type)) {
    raise(Errc::PermissionDenied, "client '" + client.client_id + "' may not append " +
                                      std::string(payload_type_name(type)));
  }
  std::unique_lock lock(mutex_);
  if (closed_) raise(Errc::BusClosed, "bus is closed");
  Entry entry;
  entry.position = entries_.size();
  // One audit clock per bus, clamped monotonic.
  last_ts_ = std::max(last_ts_, clock_->now_ms());
  entry.realtime_ts = last_ts_;
  entry.payload = payload;
  entries_.push_back(std::move(entry));
  LogPosition position = entries_.size() - 1;
  lock.unlock();
  appended_.notify_all();
  return position;
}

std::vector<Entry> MemoryBus::read(const ClientIdentity& client, LogPosition start,
                                   LogPosition end) const {
  if (start > end) raise(Errc::InvalidRange, "read start > end");
  std::lock_guard lock(mutex_);
  std::vector<Entry> out;
  LogPosition limit = std::min<LogPosition>(end, entries_.size());
  for (LogPosition p = start; p < limit; ++p) {
    if (client.permissions.readable.contains(payload_type(entries_[p].payload))) {
      out.push_back(entries_[p]);
    }
  }
  return out;
}

LogPosition MemoryBus::tail() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::vector<Entry> MemoryBus::poll(const ClientIdentity& client, LogPosition start,
                                   PayloadTypeSet filter, std::chrono::milliseconds timeout) {
  if (filter.empty()) raise(Errc::MalformedInput, "poll filter must be non-empty");
  if (!filter.is_subset_of(client.permissions.pollable)) {
    raise(Errc::PermissionDenied,
          "client '" + client.client_id + "' may not poll all requested types");
  }
  auto deadline = std::chrono::steady_clock::now() + timeout;
  std::unique_lock lock(mutex_);
  auto collect = [&] {
    std::vector<Entry> out;
    for (LogPosition p = start; p < entries_.size(); ++p) {
      if (filter.contains(payload_type(entries_[p].payload))) out.push_back(entries_[p]);
    }
    return out;
  };
  while (true) {
    std::vector<Entry> matches = collect();
    if (!matches.empty() || closed_) return matches;
    if (appended_.wait_until(lock, deadline) == std::cv_status::timeout) return collect();
  }
}

void MemoryBus::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  appended_.notify_all();
}

std::shared_ptr<SystemClock> SystemClock::instance() {
  static std::shared_ptr<SystemClock> clock = std::make_shared<SystemClock>();
  return clock;
}

}  // namespace logact
