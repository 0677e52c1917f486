#include "logact/policy.hpp"

#include <algorithm>
#include <map>
#include <optional>

#include "logact/errors.hpp"

namespace logact {
namespace {

using nlohmann::json;

// First vote per listed type, in arrival order.
std::map<std::string, Verdict> first_votes_by_type(const DeciderPolicy& policy,
                                                   std::span<const VoteBody> votes) {
  std::map<std::string, Verdict> first;
  for (const VoteBody& vote : votes) {
    if (std::find(policy.types.begin(), policy.types.end(), vote.voter_type) ==
        policy.types.end()) {
      continue;
    }
    first.emplace(vote.voter_type, vote.verdict);
  }
  return first;
}

const json& field(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) raise(Errc::MalformedPolicy, std::string("missing field '") + key + "'");
  return *it;
}

void validate(const DeciderPolicy& policy) {
  switch (policy.expr) {
    case DeciderPolicy::Expr::OnByDefault:
    case DeciderPolicy::Expr::FirstVoter:
      return;
    case DeciderPolicy::Expr::Or:
    case DeciderPolicy::Expr::And:
      if (policy.types.empty()) raise(Errc::MalformedPolicy, "voter type list must be non-empty");
      return;
    case DeciderPolicy::Expr::Threshold:
      if (policy.types.empty()) raise(Errc::MalformedPolicy, "voter type list must be non-empty");
      if (policy.threshold_k < 1 || policy.threshold_k > static_cast<int>(policy.types.size())) {
        raise(Errc::MalformedPolicy, "threshold k must satisfy 1 <= k <= |types|");
      }
      return;
  }
  raise(Errc::MalformedPolicy, "bad decider expression");
}

}  // namespace

Decision evaluate(const DeciderPolicy& policy, std::span<const VoteBody> votes) {
  switch (policy.expr) {
    case DeciderPolicy::Expr::OnByDefault:
      return Decision::Commit;

    case DeciderPolicy::Expr::FirstVoter: {
      if (votes.empty()) return Decision::Undecided;
      return votes.front().verdict == Verdict::Approve ? Decision::Commit : Decision::Abort;
    }

    case DeciderPolicy::Expr::Or: {
      auto first = first_votes_by_type(policy, votes);
      for (const auto& [type, verdict] : first) {
        if (verdict == Verdict::Approve) return Decision::Commit;
      }
      if (first.size() == policy.types.size()) return Decision::Abort;
      return Decision::Undecided;
    }

    case DeciderPolicy::Expr::And: {
      auto first = first_votes_by_type(policy, votes);
      for (const auto& [type, verdict] : first) {
        if (verdict == Verdict::Reject) return Decision::Abort;
      }
      if (first.size() == policy.types.size()) return Decision::Commit;
      return Decision::Undecided;
    }

    case DeciderPolicy::Expr::Threshold: {
      auto first = first_votes_by_type(policy, votes);
      int approvals = 0;
      for (const auto& [type, verdict] : first) {
        if (verdict == Verdict::Approve) ++approvals;
      }
      if (approvals >= policy.threshold_k) return Decision::Commit;
      int still_possible = approvals + static_cast<int>(policy.types.size() - first.size());
      if (still_possible < policy.threshold_k) return Decision::Abort;
      return Decision::Undecided;
    }
  }
  raise(Errc::MalformedPolicy, "bad decider expression");
}

ParsedPolicy parse_policy(const json& document) {
  if (!document.is_object()) raise(Errc::MalformedPolicy, "policy document must be an object");
  if (field(document, "v").get<int>() != 1) {
    raise(Errc::MalformedPolicy, "unsupported policy schema version");
  }
  std::string kind = field(document, "kind").get<std::string>();

  if (kind == "decider") {
    DeciderPolicy policy;
    std::string expr = field(document, "expr").get<std::string>();
    if (expr == "on_by_default") {
      policy.expr = DeciderPolicy::Expr::OnByDefault;
    } else if (expr == "first_voter") {
      policy.expr = DeciderPolicy::Expr::FirstVoter;
    } else if (expr == "or") {
      policy.expr = DeciderPolicy::Expr::Or;
    } else if (expr == "and") {
      policy.expr = DeciderPolicy::Expr::And;
    } else if (expr == "threshold") {
      policy.expr = DeciderPolicy::Expr::Threshold;
    } else {
      raise(Errc::MalformedPolicy, "unknown decider expression: " + expr);
    }
    if (document.contains("types")) {
      for (const auto& t : document["types"]) policy.types.push_back(t.get<std::string>());
    }
    if (document.contains("k")) policy.threshold_k = document["k"].get<int>();
    validate(policy);
    return policy;
  }

  if (kind == "voter") {
    VoterPolicy policy;
    policy.target_voter_type = field(document, "target").get<std::string>();
    if (policy.target_voter_type.empty()) {
      raise(Errc::MalformedPolicy, "voter policy target must be non-empty");
    }
    policy.body = field(document, "body");
    return policy;
  }

  if (kind == "driver_election") {
    DriverElection election;
    election.epoch = field(document, "epoch").get<std::uint64_t>();
    election.candidate_id = field(document, "candidate").get<std::string>();
    return election;
  }

  raise(Errc::MalformedPolicy, "unknown policy kind: " + kind);
}

json policy_document(const DeciderPolicy& policy) {
  validate(policy);
  json doc{{"kind", "decider"}, {"v", 1}};
  switch (policy.expr) {
    case DeciderPolicy::Expr::OnByDefault: doc["expr"] = "on_by_default"; break;
    case DeciderPolicy::Expr::FirstVoter: doc["expr"] = "first_voter"; break;
    case DeciderPolicy::Expr::Or: doc["expr"] = "or"; break;
    case DeciderPolicy::Expr::And: doc["expr"] = "and"; break;
    case DeciderPolicy::Expr::Threshold: doc["expr"] = "threshold"; break;
  }
  if (!policy.types.empty()) doc["types"] = policy.types;
  if (policy.expr == DeciderPolicy::Expr::Threshold) doc["k"] = policy.threshold_k;
  return doc;
}

json policy_document(const VoterPolicy& policy) {
  return json{{"body", policy.body}, {"kind", "voter"}, {"target", policy.target_voter_type},
              {"v", 1}};
}

json policy_document(const DriverElection& election) {
  return json{{"candidate", election.candidate_id}, {"epoch", election.epoch},
              {"kind", "driver_election"}, {"v", 1}};
}

PolicyKind policy_kind_of(const ParsedPolicy& policy) {
  if (std::holds_alternative<DeciderPolicy>(policy)) return PolicyKind::Decider;
  if (std::holds_alternative<VoterPolicy>(policy)) return PolicyKind::Voter;
  return PolicyKind::DriverElection;
}

PolicyBody make_policy_body(const std::string& issuer, const json& document) {
  ParsedPolicy parsed = parse_policy(document);
  PolicyBody body;
  body.kind = policy_kind_of(parsed);
  body.issuer = issuer;
  body.body = document;
  return body;
}

}  // namespace logact
