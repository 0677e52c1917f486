#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "logact/bus.hpp"
#include "logact/clock.hpp"
#include "logact/log_play.hpp"
#include "logact/policy.hpp"

namespace logact {

struct DeciderConfig {
  std::string decider_id{"decider"};
  DeciderPolicy initial_policy;  // governs intents before any Policy entry
  std::uint64_t vote_timeout_ms{30000};
};

// Runs the deciding stage. A decision is a pure function of the policy
// active at the intent's position and the votes in log order, so any
// two deciders append the same decisions; duplicates are tolerated
// downstream. An intent whose quorum stays open past the vote timeout
// is aborted, which keeps the machine live under voter loss.
class Decider final : public Component {
 public:
  Decider(BusClient client, DeciderConfig config, std::shared_ptr<Clock> clock = nullptr);

  static std::unique_ptr<Decider> boot(BusClient client, DeciderConfig config,
                                       const SnapshotStore* store,
                                       std::shared_ptr<Clock> clock = nullptr);

  StepStatus step() override;
  const std::string& component_id() const override { return config_.decider_id; }
  Snapshot make_snapshot() const override;
  void restore(const Snapshot& snapshot);
  void catch_up();

  std::optional<std::uint64_t> next_deadline_ms() const override;

  // Policy governing an intent at `position` (Policy entries apply to
  // strictly greater positions only).
  const DeciderPolicy& policy_at(LogPosition position) const;

  LogPosition played_up_to() const override { return played_up_to_; }
  const std::set<LogPosition>& decided() const { return decided_; }
  nlohmann::json state_json() const override;

 private:
  struct PendingIntent {
    IntentBody intent;
    std::vector<VoteBody> votes;  // log order
    std::uint64_t first_seen_ms{0};
  };

  void play(const Entry& entry);

  BusClient client_;
  DeciderConfig config_;
  std::shared_ptr<Clock> clock_;

  std::vector<std::pair<LogPosition, DeciderPolicy>> policy_history_;
  std::map<LogPosition, PendingIntent> pending_;
  std::set<LogPosition> decided_;
  ElectionView elections_;
  LogPosition played_up_to_{0};
};

}  // namespace logact
