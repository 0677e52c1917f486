#include "logact/harness/invariants.hpp"

#include <map>
#include <optional>
#include <set>

#include "logact/log_play.hpp"

namespace logact::harness {
namespace {

struct IntentRecord {
  IntentBody body;
  bool valid{false};  // epoch matched the latest election at its position
  bool resolved{false};
  std::optional<Decision> first_decision;
  std::vector<VoteBody> votes_before_decision;
  int normal_results{0};
  bool quorum_rejected_final{false};
};

}  // namespace

std::vector<Violation> check_invariants(std::span<const Entry> entries,
                                        const InvariantOptions& options) {
  std::vector<Violation> violations;
  auto flag = [&](const std::string& invariant, LogPosition position, const std::string& detail) {
    violations.push_back({invariant, position, detail});
  };

  ElectionView elections;
  std::vector<std::pair<LogPosition, DeciderPolicy>> policy_history;
  auto policy_at = [&](LogPosition position) -> const DeciderPolicy& {
    const DeciderPolicy* active = &options.initial_policy;
    for (const auto& [pos, policy] : policy_history) {
      if (pos >= position) break;
      active = &policy;
    }
    return *active;
  };

  std::map<LogPosition, IntentRecord> intents;
  std::set<LogPosition> commits_seen;  // intent positions with a commit
  LogPosition expected_position = 0;
  std::uint64_t last_ts = 0;

  auto intent_of = [&](LogPosition p) -> IntentRecord* {
    auto it = intents.find(p);
    return it == intents.end() ? nullptr : &it->second;
  };

  for (const Entry& entry : entries) {
    LogPosition pos = entry.position;

    if (pos != expected_position) {
      flag("dense-positions", pos,
           "expected position " + std::to_string(expected_position) + ", found " +
               std::to_string(pos));
    }
    ++expected_position;
    if (entry.realtime_ts < last_ts) {
      flag("monotonic-timestamps", pos, "timestamp regressed");
    }
    last_ts = entry.realtime_ts;

    if (const auto* intent = std::get_if<IntentBody>(&entry.payload)) {
      IntentRecord record;
      record.body = *intent;
      record.valid = elections.intent_valid(pos, *intent);
      intents.emplace(pos, std::move(record));
    } else if (const auto* vote = std::get_if<VoteBody>(&entry.payload)) {
      IntentRecord* record = intent_of(vote->intent_position);
      if (!record) {
        flag("intent-reference", pos,
             "vote references " + std::to_string(vote->intent_position) +
                 " which is not an intent at a smaller position");
      } else {
        if (!record->valid) {
          flag("fencing", pos, "vote for a fenced intent at " +
                                   std::to_string(vote->intent_position));
        }
        if (!record->first_decision) record->votes_before_decision.push_back(*vote);
      }
    } else if (const auto* commit = std::get_if<CommitBody>(&entry.payload)) {
      IntentRecord* record = intent_of(commit->intent_position);
      if (!record) {
        flag("intent-reference", pos, "commit references a non-intent position");
      } else {
        if (!record->valid) {
          flag("fencing", pos, "commit for a fenced intent at " +
                                   std::to_string(commit->intent_position));
        }
        commits_seen.insert(commit->intent_position);
        if (!record->first_decision) {
          record->first_decision = Decision::Commit;
          Decision expected =
              evaluate(policy_at(commit->intent_position), record->votes_before_decision);
          if (expected != Decision::Commit) {
            flag("decision-policy", pos,
                 "commit disagrees with the active quorum policy over the observed votes");
          }
        } else if (*record->first_decision == Decision::Abort) {
          flag("decision-determinism", pos, "commit after an abort for the same intent");
        }
      }
    } else if (const auto* abort = std::get_if<AbortBody>(&entry.payload)) {
      IntentRecord* record = intent_of(abort->intent_position);
      if (!record) {
        flag("intent-reference", pos, "abort references a non-intent position");
      } else {
        record->resolved = true;
        if (!record->first_decision) {
          record->first_decision = Decision::Abort;
          Decision expected =
              evaluate(policy_at(abort->intent_position), record->votes_before_decision);
          bool timeout = abort->reason.find("timeout") != std::string::npos;
          if (!(expected == Decision::Abort || (expected == Decision::Undecided && timeout))) {
            flag("decision-policy", pos,
                 "abort disagrees with the active quorum policy over the observed votes");
          }
        } else if (*record->first_decision == Decision::Commit) {
          flag("decision-determinism", pos, "abort after a commit for the same intent");
        }
      }
    } else if (const auto* result = std::get_if<ResultBody>(&entry.payload)) {
      if (result->status == ResultStatus::Recovery) {
        // Executor reboot fence resolves anything still in flight.
        for (auto& [ipos, record] : intents) {
          if (ipos < pos) record.resolved = true;
        }
      } else if (!result->intent_position) {
        flag("intent-reference", pos, "non-recovery result lacks an intent position");
      } else {
        LogPosition target = *result->intent_position;
        IntentRecord* record = intent_of(target);
        if (!record) {
          flag("intent-reference", pos, "result references a non-intent position");
        } else {
          record->resolved = true;
          record->normal_results += 1;
          if (!record->valid) {
            flag("fencing", pos, "execution of a fenced intent at " + std::to_string(target));
          }
          if (!commits_seen.count(target)) {
            flag("commit-before-execute", pos,
                 "result for intent " + std::to_string(target) +
                     " without a commit at a smaller position");
          }
          if (record->normal_results > 1) {
            flag("duplicate-execution", pos,
                 "second result for intent " + std::to_string(target));
          }
          if (result->status == ResultStatus::Ok && record->first_decision == Decision::Abort) {
            flag("enforced-safety", pos,
                 "ok result for an intent the quorum aborted at " + std::to_string(target));
          }
        }
      }
    } else if (const auto* policy = std::get_if<PolicyBody>(&entry.payload)) {
      if (auto election = as_election(*policy)) {
        elections.observe(pos, election->epoch);
      } else if (auto decider_policy = as_decider_policy(*policy)) {
        policy_history.emplace_back(pos, std::move(*decider_policy));
      }
    }

    // At most one in-flight intent per live epoch, at every prefix.
    std::uint64_t live_epoch = elections.epoch_at(pos + 1);
    int in_flight = 0;
    LogPosition sample = 0;
    for (const auto& [ipos, record] : intents) {
      if (record.valid && !record.resolved && record.body.driver_epoch == live_epoch) {
        ++in_flight;
        sample = ipos;
      }
    }
    if (in_flight > 1) {
      flag("single-in-flight", pos,
           std::to_string(in_flight) + " unresolved live-epoch intents (e.g. at " +
               std::to_string(sample) + ")");
    }
  }

  return violations;
}

}  // namespace logact::harness
