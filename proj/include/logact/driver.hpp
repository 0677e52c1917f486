#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <string>

#include "logact/bus.hpp"
#include "logact/clock.hpp"
#include "logact/inference.hpp"
#include "logact/log_play.hpp"
#include "logact/snapshot_store.hpp"

namespace logact {

struct DriverConfig {
  std::string driver_id{"driver"};
  std::string system_prompt;
  int max_inference_attempts{3};
  std::uint64_t retry_backoff_ms{10};
};

// Runs the inferring stage: plays mail / results / aborts, feeds the
// conversation to the inference adapter, and appends InfIn deltas,
// InfOut outputs, and extracted Intents. All conversation state is a
// pure fold of the log, so replay after a crash reproduces it exactly;
// the inference adapter is only consulted for turns whose InfOut is not
// on the log yet.
class Driver final : public Component {
 public:
  Driver(BusClient client, DriverConfig config, std::shared_ptr<InferenceAdapter> adapter,
         std::uint64_t epoch = 0, std::shared_ptr<Clock> clock = nullptr);

  // Boot path for a fresh or recovering driver process: appends a
  // driver_election entry first (fencing any predecessor), then rebuilds
  // conversation state from the latest snapshot plus log replay.
  static std::unique_ptr<Driver> boot(BusClient client, DriverConfig config,
                                      std::shared_ptr<InferenceAdapter> adapter,
                                      const SnapshotStore* store, bool elect = true,
                                      std::shared_ptr<Clock> clock = nullptr);

  StepStatus step() override;
  const std::string& component_id() const override { return config_.driver_id; }
  Snapshot make_snapshot() const override;
  void restore(const Snapshot& snapshot);

  // Plays new entries without driving inference; used by recovery.
  void catch_up();

  const Conversation& conversation() const { return conversation_; }
  bool quiescent() const {
    return !pending_intent_ && !pending_extraction_ && infin_count_ == infout_count_ &&
           buffer_.empty();
  }
  bool fenced() const { return fenced_; }
  std::uint64_t epoch() const { return epoch_; }
  LogPosition played_up_to() const override { return played_up_to_; }

  nlohmann::json state_json() const override;

 private:
  struct BufferedInput {
    Message message;
    LogPosition source{0};
  };

  void play(const Entry& entry);
  std::string run_inference();

  BusClient client_;
  DriverConfig config_;
  std::shared_ptr<InferenceAdapter> adapter_;
  std::shared_ptr<Clock> clock_;
  std::uint64_t epoch_{0};

  Conversation conversation_;
  std::deque<BufferedInput> buffer_;
  std::uint64_t infin_count_{0};
  std::uint64_t infout_count_{0};
  std::optional<LogPosition> pending_intent_;
  std::optional<ActionSpec> pending_extraction_;
  ElectionView elections_;
  LogPosition played_up_to_{0};
  bool fenced_{false};
};

}  // namespace logact
