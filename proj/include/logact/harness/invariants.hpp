#pragma once

#include <span>
#include <string>
#include <vector>

#include "logact/policy.hpp"
#include "logact/types.hpp"

namespace logact::harness {

struct Violation {
  std::string invariant;
  LogPosition position{0};  // the entry that violates it
  std::string detail;
};

struct InvariantOptions {
  DeciderPolicy initial_policy;  // governs intents before any Policy entry
};

// The protocol invariant suite, checked at every prefix of the log:
//  - structure: dense positions, non-decreasing timestamps, references
//    point at real intents
//  - commit-before-execute for every normal result
//  - fencing: no vote, commit, or execution for an intent whose epoch
//    is below the latest election at a smaller position
//  - at most one in-flight intent per live epoch
//  - at most one execution per intent (duplicate commits skipped)
//  - decisions agree with the active quorum policy, and no quorum-
//    rejected intent ever yields an ok result
std::vector<Violation> check_invariants(std::span<const Entry> entries,
                                        const InvariantOptions& options = {});

}  // namespace logact::harness
