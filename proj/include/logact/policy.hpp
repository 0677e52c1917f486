#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "logact/types.hpp"

namespace logact {

// Quorum expression the decider folds votes through. Quorums are over
// voter *types*, not instances: the first vote per type wins.
struct DeciderPolicy {
  enum class Expr : std::uint8_t { OnByDefault, FirstVoter, Or, And, Threshold };
  Expr expr{Expr::OnByDefault};
  std::vector<std::string> types;  // voter types the expression ranges over
  int threshold_k{0};              // Threshold only: required approvals

  friend bool operator==(const DeciderPolicy&, const DeciderPolicy&) = default;
};

enum class Decision : std::uint8_t { Commit, Abort, Undecided };

// Pure function of (policy, ordered votes). Votes from types the policy
// does not list are ignored; repeat votes from an already-counted type
// are ignored. Adding votes never flips a settled decision.
Decision evaluate(const DeciderPolicy& policy, std::span<const VoteBody> votes);

struct VoterPolicy {
  std::string target_voter_type;
  nlohmann::json body;  // interpreted by that voter type

  friend bool operator==(const VoterPolicy&, const VoterPolicy&) = default;
};

struct DriverElection {
  std::uint64_t epoch{0};
  std::string candidate_id;

  friend bool operator==(const DriverElection&, const DriverElection&) = default;
};

using ParsedPolicy = std::variant<DeciderPolicy, VoterPolicy, DriverElection>;

// Policy document schema (versioned with "v"), see docs/formats.md.
// Raises MalformedPolicy on anything that does not round-trip.
ParsedPolicy parse_policy(const nlohmann::json& document);

nlohmann::json policy_document(const DeciderPolicy& policy);
nlohmann::json policy_document(const VoterPolicy& policy);
nlohmann::json policy_document(const DriverElection& election);

PolicyKind policy_kind_of(const ParsedPolicy& policy);

// Builds a Policy payload after validating the document.
PolicyBody make_policy_body(const std::string& issuer, const nlohmann::json& document);

}  // namespace logact
