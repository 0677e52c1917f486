#include <fstream>

#include "doctest.h"
#include "logact/harness/engine.hpp"
#include "logact/harness/random_scenarios.hpp"

using namespace logact;
using namespace logact::harness;

namespace {

const OracleResult* find_oracle(const ScenarioReport& report, const std::string& name) {
  for (const OracleResult& oracle : report.oracles) {
    if (oracle.name == name) return &oracle;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("hello-task runs end to end with all oracles green") {
  ScenarioReport report = run_scenario(hello_task_scenario(), 1);
  INFO(report.to_text());
  CHECK(report.completed);
  CHECK(report.all_oracles_passed());
  CHECK(report.violations.empty());

  // the audit-trail shape: mail, then a full turn per step
  REQUIRE(report.entries.size() > 6);
  CHECK(payload_type(report.entries[0].payload) == PayloadType::Policy);
  CHECK(payload_type(report.entries[1].payload) == PayloadType::Mail);
  CHECK(payload_type(report.entries[2].payload) == PayloadType::InfIn);
  CHECK(payload_type(report.entries[3].payload) == PayloadType::InfOut);
  CHECK(payload_type(report.entries[4].payload) == PayloadType::Intent);
}

TEST_CASE("scenario runs are deterministic: byte-identical durable buses") {
  Scenario scenario = hello_task_scenario(250);
  scenario.backend.kind = BusBackendSpec::Kind::Durable;

  RunOptions keep;
  keep.keep_files = true;
  ScenarioReport first = run_scenario(scenario, 42, keep);
  ScenarioReport second = run_scenario(scenario, 42, keep);
  REQUIRE(first.all_oracles_passed());

  auto bytes = [](const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  CHECK(bytes(first.bus_file) == bytes(second.bus_file));
  CHECK(first.sandbox_tree_hash == second.sandbox_tree_hash);
  std::filesystem::remove_all(first.workdir);
  std::filesystem::remove_all(second.workdir);
}

TEST_CASE("stage metrics attribute scripted inference delay to inferring") {
  Scenario scenario = hello_task_scenario(1000);  // 1 s per inference turn
  ScenarioReport report = run_scenario(scenario, 7);
  REQUIRE(report.all_oracles_passed());
  CHECK(report.metrics.inferring_ms >= 4000);  // four turns
  CHECK(report.metrics.inferring_ms >=
        5 * (report.metrics.voting_ms + report.metrics.deciding_ms));
  CHECK(report.metrics.count_per_type[static_cast<int>(PayloadType::Intent)] == 3);
}

TEST_CASE("kill+restart faults leave the invariants intact") {
  Scenario scenario = hello_task_scenario();
  scenario.faults.push_back({Trigger{9, std::nullopt}, "decider", FaultKind::Kill});
  scenario.faults.push_back({Trigger{9, std::nullopt}, "decider", FaultKind::Restart});
  ScenarioReport report = run_scenario(scenario, 3);
  INFO(report.to_text());
  CHECK(report.all_oracles_passed());
}

TEST_CASE("pausing the executor past the vote timeout aborts but stays live") {
  Scenario scenario = hello_task_scenario();
  // pause the rule voter so first_voter never sees a vote -> timeout abort,
  // resume later and let the probe flow finish the task
  scenario.faults.push_back({Trigger{3, std::nullopt}, "rule-1", FaultKind::Pause});
  scenario.faults.push_back({Trigger{0, 20000}, "rule-1", FaultKind::Resume});
  ScenarioReport report = run_scenario(scenario, 5);
  INFO(report.to_text());
  CHECK(report.completed);
  bool timed_out_abort = false;
  for (const Entry& entry : report.entries) {
    if (const auto* abort = std::get_if<AbortBody>(&entry.payload)) {
      if (abort->reason.find("timeout") != std::string::npos) timed_out_abort = true;
    }
  }
  CHECK(timed_out_abort);
  CHECK(report.violations.empty());
  const OracleResult* file_check = find_oracle(report, "file_equals");
  REQUIRE(file_check != nullptr);
  CHECK(file_check->passed);  // the task still completed after the resume
}

TEST_CASE("executor-kill scenario recovers without rework") {
  ScenarioReport report = run_scenario(executor_kill_scenario(12, 5), 11);
  INFO(report.to_text());
  CHECK(report.all_oracles_passed());

  // exactly one recovery fence, and twelve distinct work items
  int fences = 0;
  for (const Entry& entry : report.entries) {
    const auto* result = std::get_if<ResultBody>(&entry.payload);
    if (result && result->status == ResultStatus::Recovery) ++fences;
  }
  CHECK(fences == 1);
}

TEST_CASE("hot-swap scenario reproduces the three-phase shape") {
  ScenarioReport report = run_scenario(hot_swap_scenario(10), 2);
  INFO(report.to_text());
  CHECK(report.all_oracles_passed());
  const OracleResult* phases = find_oracle(report, "hotswap_phases");
  REQUIRE(phases != nullptr);
  CHECK(phases->passed);
}

TEST_CASE("crash-point sweep over the decider on a short run is clean") {
  SweepReport sweep = crash_point_sweep(executor_kill_scenario(3, 1), "decider", 1);
  for (const auto& [index, detail] : sweep.failures) {
    INFO("kill@" << index << ": " << detail);
  }
  CHECK(sweep.clean());
  CHECK(sweep.boundaries > 10);
}

TEST_CASE("random scenarios hold the invariant suite") {
  for (std::uint64_t seed = 900; seed < 925; ++seed) {
    ScenarioReport report = run_scenario(random_scenario(seed), seed);
    INFO("seed " << seed << "\n" << report.to_text());
    CHECK(report.all_oracles_passed());
  }
}

TEST_CASE("scenario json round trip") {
  Scenario scenario = hot_swap_scenario(5);
  Scenario back = Scenario::from_json(scenario.to_json());
  CHECK(back.to_json() == scenario.to_json());
  CHECK(back.workload.size() == scenario.workload.size());
  CHECK(back.faults.size() == scenario.faults.size());
}

TEST_CASE("invariant checker flags seeded violations") {
  auto clock = std::make_shared<VirtualClock>(10);
  std::vector<Entry> entries;
  auto push = [&](Payload payload) {
    entries.push_back(Entry{entries.size(), clock->now_ms(), std::move(payload)});
    clock->advance(1);
  };

  SUBCASE("execution without a commit") {
    push(IntentBody{{ActionSpec::Kind::Builtin, "echo x", "."}, 0, 1});
    push(ResultBody{0, ResultStatus::Ok, "x"});
    auto violations = check_invariants(entries, {});
    REQUIRE_FALSE(violations.empty());
    CHECK(violations[0].invariant == "commit-before-execute");
  }

  SUBCASE("two in-flight intents in one epoch") {
    push(IntentBody{{ActionSpec::Kind::Builtin, "echo a", "."}, 0, 1});
    push(IntentBody{{ActionSpec::Kind::Builtin, "echo b", "."}, 0, 2});
    auto violations = check_invariants(entries, {});
    REQUIRE_FALSE(violations.empty());
    CHECK(violations[0].invariant == "single-in-flight");
  }

  SUBCASE("vote for a fenced intent") {
    push(make_policy_body("b", policy_document(DriverElection{2, "driver-b"})));
    push(IntentBody{{ActionSpec::Kind::Builtin, "echo stale", "."}, 1, 1});
    push(VoteBody{1, "rule", "r", Verdict::Approve, "oops"});
    auto violations = check_invariants(entries, {});
    bool fencing = false;
    for (const auto& violation : violations) fencing |= violation.invariant == "fencing";
    CHECK(fencing);
  }

  SUBCASE("ok result for a quorum-rejected intent") {
    push(IntentBody{{ActionSpec::Kind::Builtin, "echo x", "."}, 0, 1});
    push(VoteBody{0, "rule", "r", Verdict::Reject, "no"});
    push(AbortBody{0, "rejected by quorum policy"});
    push(CommitBody{0});
    push(ResultBody{0, ResultStatus::Ok, "ran anyway"});
    InvariantOptions options;
    options.initial_policy = {DeciderPolicy::Expr::FirstVoter, {}, 0};
    auto violations = check_invariants(entries, options);
    bool determinism = false, enforced = false;
    for (const auto& violation : violations) {
      determinism |= violation.invariant == "decision-determinism";
      enforced |= violation.invariant == "enforced-safety";
    }
    CHECK(determinism);
    CHECK(enforced);
  }
}
