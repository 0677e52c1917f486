#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "logact/bus.hpp"
#include "logact/inference.hpp"
#include "logact/log_play.hpp"

namespace logact {

struct VoterDescriptor {
  std::string voter_type;  // quorum-matching key ("rule", "llm", ...)
  std::string voter_id;    // instance identity, used only for dedupe
};

struct VoteOutcome {
  Verdict verdict{Verdict::Reject};
  std::string rationale;
};

// Pluggable safety check. Internal failures never surface as approvals:
// the voter wrapper converts them to rejects.
class VoterBehavior {
 public:
  virtual ~VoterBehavior() = default;
  virtual VoteOutcome vote(LogPosition intent_position, const IntentBody& intent,
                           const std::vector<Entry>& visible_history) = 0;
  virtual void apply_policy(const nlohmann::json& body) = 0;
  virtual nlohmann::json state_json() const = 0;
  virtual void restore(const nlohmann::json& doc) = 0;
};

// Ordered pattern rules over the action body or workdir; first match
// wins. Policy entries can prepend rules or change the default verdict.
struct VoterRule {
  enum class Scope : std::uint8_t { Body, Workdir };
  std::string pattern;
  bool is_regex{false};  // glob otherwise
  Verdict verdict{Verdict::Reject};
  Scope scope{Scope::Body};
};

class RuleVoter final : public VoterBehavior {
 public:
  RuleVoter(std::vector<VoterRule> rules, Verdict default_verdict);
  static std::unique_ptr<RuleVoter> from_json(const nlohmann::json& doc);

  VoteOutcome vote(LogPosition intent_position, const IntentBody& intent,
                   const std::vector<Entry>& visible_history) override;
  void apply_policy(const nlohmann::json& body) override;
  nlohmann::json state_json() const override;
  void restore(const nlohmann::json& doc) override;

 private:
  std::vector<VoterRule> rules_;
  Verdict default_verdict_;
};

// Adapter-backed voter: renders the intent plus selected bus context
// into a prompt and reads an APPROVE / REJECT verdict off the reply.
class LlmVoter final : public VoterBehavior {
 public:
  LlmVoter(std::shared_ptr<InferenceAdapter> adapter, std::string system_prompt);

  VoteOutcome vote(LogPosition intent_position, const IntentBody& intent,
                   const std::vector<Entry>& visible_history) override;
  void apply_policy(const nlohmann::json& body) override;
  nlohmann::json state_json() const override;
  void restore(const nlohmann::json& doc) override;

 private:
  std::shared_ptr<InferenceAdapter> adapter_;
  std::string system_prompt_;
};

struct VoterConfig {
  VoterDescriptor descriptor;
  // Hold the vote until these voter types have voted on the intent
  // (override-style voters want the earlier vote in their context).
  std::vector<std::string> wait_for_types;
};

// Runs the voting stage: plays intents from live epochs and appends one
// vote per intent. Voters need no fencing; a fresh instance starts at
// the current tail, a recovering one replays and dedupes by voter_id.
class Voter final : public Component {
 public:
  Voter(BusClient client, VoterConfig config, std::unique_ptr<VoterBehavior> behavior,
        LogPosition vote_from = 0);

  // fresh_join: start voting at the current tail (a voter showing up on
  // a live bus). Otherwise this is a restart: replay from the snapshot
  // (or position 0) and pick up any still-unvoted intents.
  static std::unique_ptr<Voter> boot(BusClient client, VoterConfig config,
                                     std::unique_ptr<VoterBehavior> behavior,
                                     const SnapshotStore* store, bool fresh_join = false);

  StepStatus step() override;
  const std::string& component_id() const override { return config_.descriptor.voter_id; }
  Snapshot make_snapshot() const override;
  void restore(const Snapshot& snapshot);
  void catch_up();

  LogPosition played_up_to() const override { return played_up_to_; }
  const VoterBehavior& behavior() const { return *behavior_; }
  nlohmann::json state_json() const override;

 private:
  struct PendingIntent {
    LogPosition position{0};
    IntentBody intent;
  };

  void play(const Entry& entry);
  bool wait_satisfied(LogPosition position) const;

  BusClient client_;
  VoterConfig config_;
  std::unique_ptr<VoterBehavior> behavior_;

  std::vector<PendingIntent> pending_;
  std::set<LogPosition> voted_;     // intents this voter_id already voted
  std::set<LogPosition> resolved_;  // intents that already carry a result
  std::map<LogPosition, std::set<std::string>> votes_by_type_;
  ElectionView elections_;
  LogPosition vote_from_{0};
  LogPosition played_up_to_{0};
};

}  // namespace logact
