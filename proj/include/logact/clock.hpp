#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <thread>

namespace logact {

// Millisecond clock behind the bus timestamps and component timeouts.
// Virtual clocks make scenario runs and their logs fully deterministic.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::uint64_t now_ms() const = 0;
  virtual void sleep_ms(std::uint64_t ms) = 0;
};

class SystemClock final : public Clock {
 public:
  std::uint64_t now_ms() const override {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::system_clock::now().time_since_epoch())
                                          .count());
  }
  void sleep_ms(std::uint64_t ms) override {
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  }

  static std::shared_ptr<SystemClock> instance();
};

class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(std::uint64_t start_ms = 0) : now_(start_ms) {}

  std::uint64_t now_ms() const override { return now_.load(std::memory_order_relaxed); }
  void sleep_ms(std::uint64_t ms) override { advance(ms); }

  void advance(std::uint64_t ms) { now_.fetch_add(ms, std::memory_order_relaxed); }
  void advance_to(std::uint64_t ms) {
    std::uint64_t cur = now_.load(std::memory_order_relaxed);
    while (cur < ms && !now_.compare_exchange_weak(cur, ms, std::memory_order_relaxed)) {
    }
  }

 private:
  std::atomic<std::uint64_t> now_;
};

}  // namespace logact
