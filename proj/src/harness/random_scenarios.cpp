#include "logact/harness/random_scenarios.hpp"

#include <random>

#include "logact/inference.hpp"

namespace logact::harness {
namespace {

using nlohmann::json;

json rule(const std::string& match, const std::string& respond) {
  return json{{"match", match}, {"respond", respond}};
}

std::string with_action(const std::string& prose, const ActionSpec& action) {
  return prose + "\n" + action_block(action);
}

}  // namespace

Scenario random_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  auto chance = [&](int percent) { return pick(1, 100) <= percent; };

  Scenario scenario;
  scenario.name = "random-" + std::to_string(seed);
  scenario.decider_timeout_ms = 2000;

  // Quorum policy and the voter set that serves it. Sometimes a required
  // voter type is deliberately missing: those intents must abort on the
  // vote timeout instead of hanging or committing.
  int policy_pick = pick(0, 4);
  std::vector<std::string> types;
  switch (policy_pick) {
    case 0: scenario.initial_policy = {DeciderPolicy::Expr::OnByDefault, {}, 0}; break;
    case 1:
      scenario.initial_policy = {DeciderPolicy::Expr::FirstVoter, {}, 0};
      types = {"rule"};
      break;
    case 2:
      types = {"rule", "llm"};
      scenario.initial_policy = {DeciderPolicy::Expr::Or, types, 0};
      break;
    case 3:
      types = {"rule", "llm"};
      scenario.initial_policy = {DeciderPolicy::Expr::And, types, 0};
      break;
    default:
      types = {"rule", "llm"};
      scenario.initial_policy = {DeciderPolicy::Expr::Threshold, types, pick(1, 2)};
      break;
  }
  bool drop_one_voter = !types.empty() && chance(15);
  std::size_t dropped = drop_one_voter ? static_cast<std::size_t>(pick(0, 100)) % types.size()
                                       : types.size();
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (i == dropped) continue;
    AutoVoterSpec voter;
    if (types[i] == "rule") {
      voter.descriptor = {"rule", "rule-1"};
      voter.behavior = json{{"kind", "rule"},
                            {"default", "approve"},
                            {"rules", json::array({json{{"pattern", "*ATTACK*"},
                                                        {"verdict", "reject"}}})}};
    } else {
      voter.descriptor = {"llm", "llm-1"};
      voter.behavior = json{
          {"kind", "llm"},
          {"system_prompt", "Reject real attacks, approve the rest."},
          {"adapter", json{{"kind", "scripted"},
                           {"rules", json::array({rule("ATTACK", "REJECT: attack")})},
                           {"default", "APPROVE"}}}};
    }
    scenario.voters.push_back(std::move(voter));
  }

  // Task chains driven by scripted rules keyed on unique step tokens.
  int tasks = pick(1, 3);
  json rules = json::array();
  for (int t = 1; t <= tasks; ++t) {
    int steps = pick(1, 3);
    std::string prev_token = "task " + std::to_string(t) + " start";
    for (int s = 1; s <= steps; ++s) {
      std::string token = "step " + std::to_string(t) + "." + std::to_string(s) + " done";
      ActionSpec action;
      int kind = pick(1, 100);
      if (kind <= 15) {
        action = {ActionSpec::Kind::Builtin, "fail ATTACK payload " + token, "."};
      } else if (kind <= 25) {
        const char* forged[] = {"Vote", "Commit", "Abort", "Policy"};
        action = {ActionSpec::Kind::Builtin,
                  std::string("escape_append ") + forged[pick(0, 3)], "."};
      } else {
        action = {ActionSpec::Kind::Builtin, "echo " + token, "."};
      }
      rules.push_back(rule(prev_token, with_action("Next step.", action)));
      // Chain forward on the echoed token; blocked or failed steps fall
      // through to the generic handlers below.
      prev_token = token;
    }
  }
  rules.push_back(rule("escape blocked", "The sandbox held. TASK COMPLETE"));
  rules.push_back(rule("action aborted", "Blocked by the quorum. TASK COMPLETE"));
  rules.push_back(rule("ATTACK payload", "That step failed. TASK COMPLETE"));
  rules.push_back(rule("executor rebooted", "Noted the reboot. TASK COMPLETE"));

  scenario.driver.system_prompt = "Randomized protocol exercise.";
  scenario.driver.adapter = json{{"kind", "scripted"},
                                 {"rules", std::move(rules)},
                                 {"default", "TASK COMPLETE"},
                                 {"delay_ms", 0}};

  for (int t = 1; t <= tasks; ++t) {
    WorkloadItem mail;
    mail.at.at_ms = 10000ull * static_cast<std::uint64_t>(t);
    mail.mail = "task " + std::to_string(t) + " start";
    scenario.workload.push_back(std::move(mail));
  }

  // Fault schedule: kills with immediate restart, and executor pauses
  // long enough to trip vote timeouts.
  const char* targets[] = {"driver", "decider", "executor", "rule-1", "llm-1"};
  int faults = pick(0, 2);
  for (int f = 0; f < faults; ++f) {
    std::string target = targets[pick(0, 4)];
    std::uint64_t at = static_cast<std::uint64_t>(pick(1, 60));
    scenario.faults.push_back({Trigger{at, std::nullopt}, target, FaultKind::Kill});
    scenario.faults.push_back({Trigger{at, std::nullopt}, target, FaultKind::Restart});
  }
  if (chance(20)) {
    std::uint64_t at = static_cast<std::uint64_t>(pick(1, 30));
    std::uint64_t resume_at = 10000ull * static_cast<std::uint64_t>(pick(1, tasks)) + 6000;
    scenario.faults.push_back({Trigger{at, std::nullopt}, "executor", FaultKind::Pause});
    scenario.faults.push_back({Trigger{0, resume_at}, "executor", FaultKind::Resume});
  }

  scenario.oracles.push_back({"invariants", json::object()});
  scenario.oracles.push_back({"no_escape", json::object()});
  return scenario;
}

}  // namespace logact::harness
