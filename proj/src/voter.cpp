#include "logact/voter.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <regex>

#include "logact/errors.hpp"
#include "logact/serde.hpp"

namespace logact {
namespace {

bool rule_matches(const VoterRule& rule, const IntentBody& intent) {
  const std::string& subject =
      rule.scope == VoterRule::Scope::Body ? intent.action.body : intent.action.workdir;
  if (rule.is_regex) return std::regex_search(subject, std::regex(rule.pattern));
  return ::fnmatch(rule.pattern.c_str(), subject.c_str(), 0) == 0;
}

Verdict verdict_from(const std::string& name) {
  if (name == "approve") return Verdict::Approve;
  if (name == "reject") return Verdict::Reject;
  raise(Errc::MalformedInput, "unknown verdict: " + name);
}

nlohmann::json rule_to_json(const VoterRule& rule) {
  return nlohmann::json{{"pattern", rule.pattern},
                        {"regex", rule.is_regex},
                        {"scope", rule.scope == VoterRule::Scope::Body ? "body" : "workdir"},
                        {"verdict", std::string(verdict_name(rule.verdict))}};
}

VoterRule rule_from_json(const nlohmann::json& doc) {
  VoterRule rule;
  rule.pattern = doc.at("pattern").get<std::string>();
  rule.is_regex = doc.value("regex", false);
  rule.verdict = verdict_from(doc.at("verdict").get<std::string>());
  std::string scope = doc.value("scope", "body");
  if (scope == "workdir") {
    rule.scope = VoterRule::Scope::Workdir;
  } else if (scope != "body") {
    raise(Errc::MalformedInput, "unknown rule scope: " + scope);
  }
  return rule;
}

}  // namespace

RuleVoter::RuleVoter(std::vector<VoterRule> rules, Verdict default_verdict)
    : rules_(std::move(rules)), default_verdict_(default_verdict) {}

std::unique_ptr<RuleVoter> RuleVoter::from_json(const nlohmann::json& doc) {
  std::vector<VoterRule> rules;
  if (doc.contains("rules")) {
    for (const auto& r : doc["rules"]) rules.push_back(rule_from_json(r));
  }
  Verdict fallback = verdict_from(doc.value("default", "approve"));
  return std::make_unique<RuleVoter>(std::move(rules), fallback);
}

VoteOutcome RuleVoter::vote(LogPosition, const IntentBody& intent, const std::vector<Entry>&) {
  for (const VoterRule& rule : rules_) {
    if (rule_matches(rule, intent)) {
      return {rule.verdict, "matched rule '" + rule.pattern + "'"};
    }
  }
  return {default_verdict_, "no rule matched; default verdict"};
}

void RuleVoter::apply_policy(const nlohmann::json& body) {
  // New rules go in front so they override older ones.
  if (body.contains("add_rules")) {
    std::vector<VoterRule> added;
    for (const auto& r : body["add_rules"]) added.push_back(rule_from_json(r));
    rules_.insert(rules_.begin(), added.begin(), added.end());
  }
  if (body.contains("default_verdict")) {
    default_verdict_ = verdict_from(body["default_verdict"].get<std::string>());
  }
}

nlohmann::json RuleVoter::state_json() const {
  nlohmann::json rules = nlohmann::json::array();
  for (const VoterRule& rule : rules_) rules.push_back(rule_to_json(rule));
  return nlohmann::json{{"default", std::string(verdict_name(default_verdict_))},
                        {"rules", std::move(rules)}};
}

void RuleVoter::restore(const nlohmann::json& doc) {
  rules_.clear();
  for (const auto& r : doc.at("rules")) rules_.push_back(rule_from_json(r));
  default_verdict_ = verdict_from(doc.at("default").get<std::string>());
}

LlmVoter::LlmVoter(std::shared_ptr<InferenceAdapter> adapter, std::string system_prompt)
    : adapter_(std::move(adapter)), system_prompt_(std::move(system_prompt)) {}

VoteOutcome LlmVoter::vote(LogPosition intent_position, const IntentBody& intent,
                           const std::vector<Entry>& visible_history) {
  // Intent plus selected context, not the full history: the task mail,
  // recent results, and any votes already cast on this intent.
  std::string context;
  const MailBody* task = nullptr;
  for (const Entry& entry : visible_history) {
    if (const auto* mail = std::get_if<MailBody>(&entry.payload)) task = mail;
  }
  if (task) context += "task mail: " + task->body + "\n";
  int results_left = 3;
  for (auto it = visible_history.rbegin(); it != visible_history.rend() && results_left > 0;
       ++it) {
    if (const auto* result = std::get_if<ResultBody>(&it->payload)) {
      context += "recent result: " + result->output + "\n";
      --results_left;
    }
  }
  for (const Entry& entry : visible_history) {
    if (const auto* other = std::get_if<VoteBody>(&entry.payload)) {
      if (other->intent_position == intent_position) {
        context += "vote by " + other->voter_type + ": " +
                   std::string(verdict_name(other->verdict)) + " (" + other->rationale + ")\n";
      }
    }
  }
  context += "proposed action (" +
             std::string(intent.action.kind == ActionSpec::Kind::Shell ? "shell" : "builtin") +
             ", workdir " + intent.action.workdir + "):\n" + intent.action.body + "\n";
  context += "Reply APPROVE or REJECT.";

  Conversation conversation;
  conversation.messages.push_back(Message{Message::Role::System, system_prompt_});
  conversation.messages.push_back(Message{Message::Role::User, context});
  std::string reply = adapter_->infer(conversation);

  std::size_t approve_at = reply.find("APPROVE");
  std::size_t reject_at = reply.find("REJECT");
  if (approve_at != std::string::npos &&
      (reject_at == std::string::npos || approve_at < reject_at)) {
    return {Verdict::Approve, reply};
  }
  if (reject_at != std::string::npos) return {Verdict::Reject, reply};
  return {Verdict::Reject, "no verdict token in reply: " + reply};
}

void LlmVoter::apply_policy(const nlohmann::json& body) {
  if (body.contains("system_prompt_append")) {
    system_prompt_ += "\n";
    system_prompt_ += body["system_prompt_append"].get<std::string>();
  }
  if (body.contains("system_prompt")) {
    system_prompt_ = body["system_prompt"].get<std::string>();
  }
}

nlohmann::json LlmVoter::state_json() const {
  return nlohmann::json{{"system_prompt", system_prompt_}};
}

void LlmVoter::restore(const nlohmann::json& doc) {
  system_prompt_ = doc.at("system_prompt").get<std::string>();
}

Voter::Voter(BusClient client, VoterConfig config, std::unique_ptr<VoterBehavior> behavior,
             LogPosition vote_from)
    : client_(std::move(client)),
      config_(std::move(config)),
      behavior_(std::move(behavior)),
      vote_from_(vote_from) {}

std::unique_ptr<Voter> Voter::boot(BusClient client, VoterConfig config,
                                   std::unique_ptr<VoterBehavior> behavior,
                                   const SnapshotStore* store, bool fresh_join) {
  std::optional<Snapshot> snapshot;
  if (store) {
    try {
      snapshot = store->get_latest(config.descriptor.voter_id);
    } catch (const Error&) {
      snapshot.reset();  // corrupt snapshot: full replay
    }
  }
  LogPosition vote_from = 0;
  if (!snapshot && fresh_join) vote_from = client.tail();
  auto voter = std::make_unique<Voter>(std::move(client), std::move(config), std::move(behavior),
                                       vote_from);
  if (snapshot) voter->restore(*snapshot);
  voter->catch_up();
  return voter;
}

void Voter::play(const Entry& entry) {
  LogPosition pos = entry.position;
  if (const auto* intent = std::get_if<IntentBody>(&entry.payload)) {
    if (pos >= vote_from_ && elections_.intent_valid(pos, *intent)) {
      pending_.push_back({pos, *intent});
    }
  } else if (const auto* vote = std::get_if<VoteBody>(&entry.payload)) {
    votes_by_type_[vote->intent_position].insert(vote->voter_type);
    if (vote->voter_id == config_.descriptor.voter_id) voted_.insert(vote->intent_position);
  } else if (const auto* result = std::get_if<ResultBody>(&entry.payload)) {
    if (result->intent_position) resolved_.insert(*result->intent_position);
  } else if (const auto* policy = std::get_if<PolicyBody>(&entry.payload)) {
    if (auto election = as_election(*policy)) {
      elections_.observe(pos, election->epoch);
    } else if (auto voter_policy = as_voter_policy(*policy)) {
      if (voter_policy->target_voter_type == config_.descriptor.voter_type) {
        behavior_->apply_policy(voter_policy->body);
      }
    }
  }
  played_up_to_ = pos + 1;
}

void Voter::catch_up() {
  for (const Entry& entry : client_.read(played_up_to_, client_.tail())) play(entry);
}

bool Voter::wait_satisfied(LogPosition position) const {
  auto it = votes_by_type_.find(position);
  for (const std::string& type : config_.wait_for_types) {
    if (it == votes_by_type_.end() || !it->second.count(type)) return false;
  }
  return true;
}

StepStatus Voter::step() {
  catch_up();
  for (const PendingIntent& pending : pending_) {
    if (voted_.count(pending.position) || resolved_.count(pending.position)) continue;
    if (!wait_satisfied(pending.position)) continue;

    VoteOutcome outcome;
    try {
      std::vector<Entry> history = client_.read(0, pending.position + 1);
      // Votes cast after the intent are context too (override voters).
      for (const Entry& later : client_.read(pending.position + 1, client_.tail())) {
        if (std::holds_alternative<VoteBody>(later.payload)) history.push_back(later);
      }
      outcome = behavior_->vote(pending.position, pending.intent, history);
    } catch (const std::exception& err) {
      // Fail closed: a broken voter must not approve anything.
      outcome = {Verdict::Reject, std::string("voter failure: ") + err.what()};
    }
    VoteBody vote{pending.position, config_.descriptor.voter_type, config_.descriptor.voter_id,
                  outcome.verdict, outcome.rationale};
    client_.append(Payload(vote));
    catch_up();
    return StepStatus::Progress;
  }
  return StepStatus::Idle;
}

nlohmann::json Voter::state_json() const {
  nlohmann::json pending = nlohmann::json::array();
  for (const PendingIntent& p : pending_) {
    pending.push_back({{"intent", payload_to_json(Payload(p.intent))}, {"position", p.position}});
  }
  nlohmann::json votes = nlohmann::json::object();
  for (const auto& [pos, types] : votes_by_type_) {
    votes[std::to_string(pos)] = std::vector<std::string>(types.begin(), types.end());
  }
  return nlohmann::json{{"behavior", behavior_->state_json()},
                        {"elections", elections_.to_json()},
                        {"pending", std::move(pending)},
                        {"played_up_to", played_up_to_},
                        {"resolved", std::vector<LogPosition>(resolved_.begin(), resolved_.end())},
                        {"vote_from", vote_from_},
                        {"voted", std::vector<LogPosition>(voted_.begin(), voted_.end())},
                        {"votes_by_type", std::move(votes)}};
}

Snapshot Voter::make_snapshot() const {
  Snapshot snapshot;
  snapshot.component_id = config_.descriptor.voter_id;
  snapshot.log_position = played_up_to_;
  snapshot.state = state_json().dump();
  return snapshot;
}

void Voter::restore(const Snapshot& snapshot) {
  nlohmann::json doc = nlohmann::json::parse(snapshot.state, nullptr, false);
  if (doc.is_discarded()) raise(Errc::CorruptSnapshot, "voter snapshot state is not JSON");
  behavior_->restore(doc.at("behavior"));
  elections_ = ElectionView::from_json(doc.at("elections"));
  pending_.clear();
  for (const auto& p : doc.at("pending")) {
    Payload payload = payload_from_json(p.at("intent"));
    pending_.push_back({p.at("position").get<LogPosition>(), std::get<IntentBody>(payload)});
  }
  voted_.clear();
  for (const auto& v : doc.at("voted")) voted_.insert(v.get<LogPosition>());
  resolved_.clear();
  for (const auto& r : doc.at("resolved")) resolved_.insert(r.get<LogPosition>());
  votes_by_type_.clear();
  for (const auto& [key, types] : doc.at("votes_by_type").items()) {
    std::set<std::string> set;
    for (const auto& t : types) set.insert(t.get<std::string>());
    votes_by_type_[std::stoull(key)] = std::move(set);
  }
  vote_from_ = doc.at("vote_from").get<LogPosition>();
  played_up_to_ = doc.at("played_up_to").get<LogPosition>();
}

}  // namespace logact
