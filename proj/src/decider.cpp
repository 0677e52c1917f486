#include "logact/decider.hpp"

#include <algorithm>

#include "logact/errors.hpp"
#include "logact/serde.hpp"

namespace logact {

Decider::Decider(BusClient client, DeciderConfig config, std::shared_ptr<Clock> clock)
    : client_(std::move(client)),
      config_(std::move(config)),
      clock_(clock ? std::move(clock) : SystemClock::instance()) {}

std::unique_ptr<Decider> Decider::boot(BusClient client, DeciderConfig config,
                                       const SnapshotStore* store, std::shared_ptr<Clock> clock) {
  auto decider = std::make_unique<Decider>(std::move(client), std::move(config), std::move(clock));
  if (store) {
    std::optional<Snapshot> snapshot;
    try {
      snapshot = store->get_latest(decider->component_id());
    } catch (const Error&) {
      snapshot.reset();  // corrupt snapshot: full replay
    }
    if (snapshot) decider->restore(*snapshot);
  }
  decider->catch_up();
  return decider;
}

void Decider::play(const Entry& entry) {
  LogPosition pos = entry.position;
  if (const auto* intent = std::get_if<IntentBody>(&entry.payload)) {
    if (elections_.intent_valid(pos, *intent) && !decided_.count(pos)) {
      PendingIntent pending;
      pending.intent = *intent;
      pending.first_seen_ms = clock_->now_ms();
      pending_.emplace(pos, std::move(pending));
    }
  } else if (const auto* vote = std::get_if<VoteBody>(&entry.payload)) {
    auto it = pending_.find(vote->intent_position);
    if (it != pending_.end()) it->second.votes.push_back(*vote);
  } else if (const auto* commit = std::get_if<CommitBody>(&entry.payload)) {
    decided_.insert(commit->intent_position);
    pending_.erase(commit->intent_position);
  } else if (const auto* abort = std::get_if<AbortBody>(&entry.payload)) {
    decided_.insert(abort->intent_position);
    pending_.erase(abort->intent_position);
  } else if (const auto* policy = std::get_if<PolicyBody>(&entry.payload)) {
    if (auto election = as_election(*policy)) {
      elections_.observe(pos, election->epoch);
    } else if (auto decider_policy = as_decider_policy(*policy)) {
      policy_history_.emplace_back(pos, std::move(*decider_policy));
    }
  }
  played_up_to_ = pos + 1;
}

void Decider::catch_up() {
  for (const Entry& entry : client_.read(played_up_to_, client_.tail())) play(entry);
}

const DeciderPolicy& Decider::policy_at(LogPosition position) const {
  const DeciderPolicy* active = &config_.initial_policy;
  for (const auto& [pos, policy] : policy_history_) {
    if (pos >= position) break;
    active = &policy;
  }
  return *active;
}

StepStatus Decider::step() {
  catch_up();
  for (auto& [position, pending] : pending_) {
    Decision decision = evaluate(policy_at(position), pending.votes);
    if (decision == Decision::Undecided &&
        clock_->now_ms() >= pending.first_seen_ms + config_.vote_timeout_ms) {
      client_.append(Payload(AbortBody{position, "timeout waiting for votes"}));
      catch_up();
      return StepStatus::Progress;
    }
    if (decision == Decision::Commit) {
      client_.append(Payload(CommitBody{position}));
      catch_up();
      return StepStatus::Progress;
    }
    if (decision == Decision::Abort) {
      client_.append(Payload(AbortBody{position, "rejected by quorum policy"}));
      catch_up();
      return StepStatus::Progress;
    }
  }
  return StepStatus::Idle;
}

std::optional<std::uint64_t> Decider::next_deadline_ms() const {
  std::optional<std::uint64_t> deadline;
  for (const auto& [position, pending] : pending_) {
    std::uint64_t at = pending.first_seen_ms + config_.vote_timeout_ms;
    if (!deadline || at < *deadline) deadline = at;
  }
  return deadline;
}

nlohmann::json Decider::state_json() const {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& [pos, policy] : policy_history_) {
    history.push_back({{"policy", policy_document(policy)}, {"position", pos}});
  }
  nlohmann::json pending = nlohmann::json::object();
  for (const auto& [pos, item] : pending_) {
    nlohmann::json votes = nlohmann::json::array();
    for (const VoteBody& vote : item.votes) votes.push_back(payload_to_json(Payload(vote)));
    pending[std::to_string(pos)] = {{"first_seen_ms", item.first_seen_ms},
                                    {"intent", payload_to_json(Payload(item.intent))},
                                    {"votes", std::move(votes)}};
  }
  return nlohmann::json{{"decided", std::vector<LogPosition>(decided_.begin(), decided_.end())},
                        {"elections", elections_.to_json()},
                        {"pending", std::move(pending)},
                        {"played_up_to", played_up_to_},
                        {"policy_history", std::move(history)}};
}

Snapshot Decider::make_snapshot() const {
  Snapshot snapshot;
  snapshot.component_id = config_.decider_id;
  snapshot.log_position = played_up_to_;
  snapshot.state = state_json().dump();
  snapshot.created_ts = clock_->now_ms();
  return snapshot;
}

void Decider::restore(const Snapshot& snapshot) {
  nlohmann::json doc = nlohmann::json::parse(snapshot.state, nullptr, false);
  if (doc.is_discarded()) raise(Errc::CorruptSnapshot, "decider snapshot state is not JSON");
  policy_history_.clear();
  for (const auto& h : doc.at("policy_history")) {
    ParsedPolicy parsed = parse_policy(h.at("policy"));
    policy_history_.emplace_back(h.at("position").get<LogPosition>(),
                                 std::get<DeciderPolicy>(parsed));
  }
  pending_.clear();
  for (const auto& [key, item] : doc.at("pending").items()) {
    PendingIntent pending;
    pending.intent = std::get<IntentBody>(payload_from_json(item.at("intent")));
    pending.first_seen_ms = item.at("first_seen_ms").get<std::uint64_t>();
    for (const auto& v : item.at("votes")) {
      pending.votes.push_back(std::get<VoteBody>(payload_from_json(v)));
    }
    pending_.emplace(std::stoull(key), std::move(pending));
  }
  decided_.clear();
  for (const auto& d : doc.at("decided")) decided_.insert(d.get<LogPosition>());
  elections_ = ElectionView::from_json(doc.at("elections"));
  played_up_to_ = doc.at("played_up_to").get<LogPosition>();
}

}  // namespace logact
