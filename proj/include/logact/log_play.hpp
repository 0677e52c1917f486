#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "logact/bus.hpp"
#include "logact/policy.hpp"
#include "logact/snapshot_store.hpp"
#include "logact/types.hpp"

namespace logact {

enum class StepStatus { Idle, Progress, Fenced };

// Driver elections observed while playing a log, and the fencing rule
// every player applies: an intent is valid only if its driver epoch
// equals the highest election epoch at any smaller log position.
class ElectionView {
 public:
  void observe(LogPosition position, std::uint64_t epoch);

  // Highest election epoch strictly before `position` (0 if none).
  std::uint64_t epoch_at(LogPosition position) const;
  std::uint64_t current_epoch() const;

  bool intent_valid(LogPosition position, const IntentBody& intent) const {
    return intent.driver_epoch == epoch_at(position);
  }

  nlohmann::json to_json() const;
  static ElectionView from_json(const nlohmann::json& doc);

  friend bool operator==(const ElectionView&, const ElectionView&) = default;

 private:
  // (election position, running max epoch), ascending by position
  std::vector<std::pair<LogPosition, std::uint64_t>> max_by_position_;
};

// Parses a Policy payload as a driver election; nullopt for other kinds
// or documents this build cannot interpret.
std::optional<DriverElection> as_election(const PolicyBody& policy);
std::optional<DeciderPolicy> as_decider_policy(const PolicyBody& policy);
std::optional<VoterPolicy> as_voter_policy(const PolicyBody& policy);

struct ElectionOutcome {
  std::uint64_t epoch{0};
  LogPosition position{0};  // the fence point
};

// Appends a driver_election Policy with epoch = highest observed + 1.
// Retries if a concurrent election claimed the same epoch first, so the
// winning epoch is unique once the dust settles.
ElectionOutcome driver_elect(const BusClient& client, const std::string& candidate_id);

// Uniform surface the harness and component loops drive.
class Component {
 public:
  virtual ~Component() = default;
  virtual StepStatus step() = 0;
  virtual const std::string& component_id() const = 0;
  virtual Snapshot make_snapshot() const = 0;
  virtual LogPosition played_up_to() const = 0;
  virtual nlohmann::json state_json() const = 0;
  // Earliest pending virtual deadline (ms), if any; lets a deterministic
  // scheduler advance time instead of sleeping.
  virtual std::optional<std::uint64_t> next_deadline_ms() const { return std::nullopt; }
};

}  // namespace logact
