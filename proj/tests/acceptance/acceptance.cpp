// Acceptance suite: one test case per criterion, one PASS/FAIL line each.
// Run via `ctest -R acceptance` or directly: ./tests/logact_acceptance

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "logact/decider.hpp"
#include "logact/driver.hpp"
#include "logact/durable_bus.hpp"
#include "logact/errors.hpp"
#include "logact/executor.hpp"
#include "logact/harness/engine.hpp"
#include "logact/harness/random_scenarios.hpp"
#include "logact/kernel.hpp"
#include "logact/memory_bus.hpp"
#include "logact/serde.hpp"
#include "logact/voter.hpp"

using namespace logact;
using namespace logact::harness;
using nlohmann::json;

namespace {

struct CriterionTimer {
  const char* name;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  bool passed = false;

  explicit CriterionTimer(const char* name_in) : name(name_in) {}
  ~CriterionTimer() {
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    std::printf("[%s] %s (%.1fs)\n", passed ? "PASS" : "FAIL", name,
                static_cast<double>(elapsed) / 1000.0);
    std::fflush(stdout);
  }
};

std::filesystem::path fresh_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("logact-acc-" + tag + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

ClientIdentity full_access(const std::string& id) {
  Permissions p;
  p.appendable = PayloadTypeSet::all();
  p.readable = PayloadTypeSet::all();
  p.pollable = PayloadTypeSet::all();
  return {id, p};
}

std::string failed_oracles(const ScenarioReport& report) {
  std::string out;
  for (const OracleResult& oracle : report.oracles) {
    if (!oracle.passed) out += oracle.name + ": " + oracle.detail + "; ";
  }
  if (!report.completed) out += "stalled; ";
  return out;
}

}  // namespace

TEST_CASE("criterion 1: protocol safety under randomized faults") {
  CriterionTimer timer(
      "criterion 1: protocol safety suite, 1000 randomized fault-injected runs");

  int violations = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    ScenarioReport report = run_scenario(random_scenario(seed), seed);
    if (!report.all_oracles_passed()) {
      ++violations;
      if (violations <= 3) {
        MESSAGE("seed ", seed, ": ", failed_oracles(report));
      }
    }
  }
  CHECK(violations == 0);

  // The slot-9 / slot-10 construction: driver B's election lands at a
  // smaller slot than fenced driver A's in-flight intention; every
  // player must ignore the later intent.
  auto sandbox = fresh_dir("c1-fence");
  {
    auto clock = std::make_shared<VirtualClock>(100);
    MemoryBus bus(clock);
    BusClient driver_a{&bus, role_identity(Role::Driver, "driver-a")};
    BusClient driver_b{&bus, role_identity(Role::Driver, "driver-b")};
    std::uint64_t epoch_a = driver_elect(driver_a, "driver-a").epoch;
    driver_elect(driver_b, "driver-b");  // the fence (slot 9 analogue)
    LogPosition stale = driver_a.append(Payload(
        IntentBody{{ActionSpec::Kind::Builtin, "echo stale", "."}, epoch_a, 1}));

    Voter voter(BusClient{&bus, role_identity(Role::Voter, "rule-1")}, {{"rule", "rule-1"}, {}},
                std::make_unique<RuleVoter>(std::vector<VoterRule>{}, Verdict::Approve));
    Decider decider(BusClient{&bus, role_identity(Role::Decider, "decider")},
                    {"decider", {DeciderPolicy::Expr::OnByDefault, {}, 0}, 60000}, clock);
    Executor executor(BusClient{&bus, role_identity(Role::Executor, "executor")},
                      {"executor", sandbox}, clock);
    for (int round = 0; round < 8; ++round) {
      voter.step();
      decider.step();
      executor.step();
    }
    for (const Entry& entry : bus.read(full_access("check"), 0, bus.tail())) {
      if (const auto* vote = std::get_if<VoteBody>(&entry.payload)) {
        CHECK(vote->intent_position != stale);
      }
      if (const auto* commit = std::get_if<CommitBody>(&entry.payload)) {
        CHECK(commit->intent_position != stale);
      }
      if (const auto* result = std::get_if<ResultBody>(&entry.payload)) {
        if (result->intent_position) CHECK(*result->intent_position != stale);
      }
    }
  }
  std::filesystem::remove_all(sandbox);

  // ACL soundness, stated directly: the executor identity can never
  // append Vote, Commit, Abort, or Policy.
  {
    MemoryBus bus;
    ClientIdentity executor = role_identity(Role::Executor, "executor");
    CHECK_THROWS_AS(bus.append(executor, VoteBody{0, "x", "x", Verdict::Approve, ""}), Error);
    CHECK_THROWS_AS(bus.append(executor, CommitBody{0}), Error);
    CHECK_THROWS_AS(bus.append(executor, AbortBody{0, "x"}), Error);
    CHECK_THROWS_AS(
        bus.append(executor, PolicyBody{PolicyKind::Decider, "executor", json::object()}),
        Error);
    CHECK_NOTHROW(bus.append(executor, ResultBody{std::nullopt, ResultStatus::Recovery, "ok"}));
  }

  timer.passed = violations == 0;
}

TEST_CASE("criterion 2: crash-point sweeps with differential replay") {
  CriterionTimer timer("criterion 2: hello-task crash-point sweeps over all four components");
  bool all_clean = true;

  Scenario scenario = hello_task_scenario();

  // Uncrashed baseline.
  ScenarioReport baseline = run_scenario(scenario, 1);
  REQUIRE(baseline.all_oracles_passed());

  // Differential replay: recovering each component from the baseline's
  // log must land in exactly the state the live component reached.
  {
    auto clock = std::make_shared<VirtualClock>(1000);
    MemoryBus replay_bus(clock);
    ClientIdentity admin = full_access("replayer");
    for (const Entry& entry : baseline.entries) replay_bus.append(admin, entry.payload);

    DriverConfig driver_config;
    driver_config.driver_id = "driver";
    driver_config.system_prompt = scenario.driver.system_prompt;
    struct NeverCalled : InferenceAdapter {
      std::string infer(const Conversation&) override {
        throw std::logic_error("replay must not run inference");
      }
    };
    auto driver = Driver::boot(BusClient{&replay_bus, role_identity(Role::Driver, "driver")},
                               driver_config, std::make_shared<NeverCalled>(), nullptr,
                               /*elect=*/false, clock);
    bool driver_match = driver->state_json() == baseline.component_states.at("driver");
    CHECK(driver_match);

    DeciderConfig decider_config{"decider", scenario.initial_policy,
                                 scenario.decider_timeout_ms};
    auto decider = Decider::boot(BusClient{&replay_bus, role_identity(Role::Decider, "decider")},
                                 decider_config, nullptr, clock);
    bool decider_match = decider->state_json() == baseline.component_states.at("decider");
    CHECK(decider_match);

    auto voter = Voter::boot(BusClient{&replay_bus, role_identity(Role::Voter, "rule-1")},
                             {{"rule", "rule-1"}, {}},
                             make_voter_behavior(scenario.voters[0].behavior, clock), nullptr,
                             /*fresh_join=*/false);
    bool voter_match = voter->state_json() == baseline.component_states.at("rule-1");
    CHECK(voter_match);
    all_clean = all_clean && driver_match && decider_match && voter_match;
  }

  // Sweeps: kill each component at every append boundary, recover, and
  // require a completed task plus a clean invariant suite. Components
  // whose recovery adds no log entries must also land in exactly the
  // uncrashed run's state.
  std::uint64_t n = baseline.entries.size();
  for (const std::string component : {"driver", "rule-1", "decider", "executor"}) {
    int failures = 0;
    for (std::uint64_t i = 0; i <= n; ++i) {
      Scenario crashed = scenario;
      crashed.faults.push_back({Trigger{i, std::nullopt}, component, FaultKind::Kill});
      crashed.faults.push_back({Trigger{i, std::nullopt}, component, FaultKind::Restart});
      ScenarioReport run = run_scenario(crashed, 1);
      bool ok = run.all_oracles_passed();
      if (component == "decider" || component == "rule-1") {
        ok = ok &&
             run.component_states.at(component) == baseline.component_states.at(component);
      }
      if (component == "driver") {
        // its state is the conversation history
        ok = ok && run.component_states.at("driver").at("conversation") ==
                       baseline.component_states.at("driver").at("conversation");
      }
      if (!ok) {
        ++failures;
        if (failures <= 3) MESSAGE(component, " kill@", i, ": ", failed_oracles(run));
      }
    }
    CHECK(failures == 0);
    all_clean = all_clean && failures == 0;
  }
  timer.passed = all_clean;
}

TEST_CASE("criterion 3: voter hot-swap restores utility while blocking attacks") {
  CriterionTimer timer("criterion 3: hot-swap phases (no voter -> rule -> rule|llm)");

  ScenarioReport report = run_scenario(hot_swap_scenario(10), 1);
  REQUIRE(report.completed);
  CHECK(report.violations.empty());

  // Recompute the per-phase outcome table and pin the exact numbers:
  // 10 tasks per phase, one attack each (10% rate), two rule-voter
  // false positives among the benign tasks.
  int policy_entries = 0;
  std::map<LogPosition, std::pair<int, bool>> intents;  // position -> (phase, attack)
  std::set<LogPosition> committed;
  for (const Entry& entry : report.entries) {
    if (const auto* policy = std::get_if<PolicyBody>(&entry.payload)) {
      if (policy->kind == PolicyKind::Decider) ++policy_entries;
    } else if (const auto* intent = std::get_if<IntentBody>(&entry.payload)) {
      bool attack = intent->action.body.find("ATTACK") != std::string::npos;
      intents[entry.position] = {policy_entries, attack};
    } else if (const auto* commit = std::get_if<CommitBody>(&entry.payload)) {
      committed.insert(commit->intent_position);
    }
  }
  int attack_total[4] = {}, attack_committed[4] = {}, benign_total[4] = {},
      benign_committed[4] = {};
  for (const auto& [pos, info] : intents) {
    auto [phase, attack] = info;
    REQUIRE(phase >= 1);
    REQUIRE(phase <= 3);
    if (attack) {
      ++attack_total[phase];
      if (committed.count(pos)) ++attack_committed[phase];
    } else {
      ++benign_total[phase];
      if (committed.count(pos)) ++benign_committed[phase];
    }
  }

  // phase 1, no voter: every intent commits, attacks included
  CHECK(attack_total[1] == 1);
  CHECK(attack_committed[1] == 1);
  CHECK(benign_total[1] == 9);
  CHECK(benign_committed[1] == 9);
  // phase 2, rule voter via first_voter: all matched attacks abort,
  // benign commit rate drops on the scripted false positives
  CHECK(attack_total[2] == 1);
  CHECK(attack_committed[2] == 0);
  CHECK(benign_total[2] == 9);
  CHECK(benign_committed[2] == 7);
  // phase 3, dual voter via boolean_OR: attacks still abort, benign
  // commit rate returns exactly to the phase-1 level (tolerance 0)
  CHECK(attack_total[3] == 1);
  CHECK(attack_committed[3] == 0);
  CHECK(benign_total[3] == 9);
  CHECK(benign_committed[3] == 9);

  timer.passed = attack_committed[1] == 1 && attack_committed[2] == 0 &&
                 attack_committed[3] == 0 && benign_committed[2] == 7 &&
                 benign_committed[3] == benign_committed[1];
}

TEST_CASE("criterion 4: recovery without rework on the 50-item task") {
  CriterionTimer timer("criterion 4: executor killed after item 20; items 21-50 resume");

  ScenarioReport report = run_scenario(executor_kill_scenario(50, 20), 1);
  REQUIRE(report.completed);
  CHECK(report.violations.empty());
  for (const OracleResult& oracle : report.oracles) {
    INFO(oracle.name, ": ", oracle.detail);
    CHECK(oracle.passed);  // work_items_once(50) + intent_before + invariants
  }

  // exactly 20 item results before the recovery fence, and the work
  // intents after the fence are items 21..50 in order, preceded by the
  // introspection intent
  std::optional<LogPosition> fence;
  int results_before_fence = 0;
  std::vector<int> items_after_fence;
  bool saw_introspection_first = false;
  for (const Entry& entry : report.entries) {
    if (const auto* result = std::get_if<ResultBody>(&entry.payload)) {
      if (result->status == ResultStatus::Recovery && !fence) {
        fence = entry.position;
      } else if (!fence && result->intent_position) {
        ++results_before_fence;
      }
    } else if (const auto* intent = std::get_if<IntentBody>(&entry.payload)) {
      if (!fence) continue;
      const std::string& body = intent->action.body;
      if (body.rfind("count_done", 0) == 0 && items_after_fence.empty()) {
        saw_introspection_first = true;
      }
      if (body.rfind("work_item ", 0) == 0) {
        items_after_fence.push_back(std::stoi(body.substr(10)));
      }
    }
  }
  REQUIRE(fence.has_value());
  CHECK(results_before_fence == 20);
  CHECK(saw_introspection_first);
  REQUIRE(items_after_fence.size() == 30);
  for (int k = 0; k < 30; ++k) CHECK(items_after_fence[static_cast<std::size_t>(k)] == 21 + k);

  timer.passed = results_before_fence == 20 && saw_introspection_first &&
                 items_after_fence.size() == 30 && report.all_oracles_passed();
}

TEST_CASE("criterion 5: delta logging keeps the system prompt off the hot path") {
  CriterionTimer timer("criterion 5: 70KB prompt logged once; inferring >= 5x voting+deciding");

  // A 10-turn scripted run over the durable backend with a 70KB system
  // prompt and a 1s scripted inference delay per turn.
  Scenario scenario;
  scenario.name = "delta-overhead";
  scenario.backend.kind = BusBackendSpec::Kind::Durable;
  scenario.initial_policy = {DeciderPolicy::Expr::FirstVoter, {}, 0};
  AutoVoterSpec voter;
  voter.descriptor = {"rule", "rule-1"};
  voter.behavior = json{{"kind", "rule"}, {"default", "approve"}, {"rules", json::array()}};
  scenario.voters.push_back(voter);

  std::string prompt;
  prompt.reserve(70 * 1024);
  while (prompt.size() < 70 * 1024) {
    prompt += "You are a careful agent; follow the task list and report every step. ";
  }
  prompt.resize(70 * 1024);
  scenario.driver.system_prompt = prompt;

  json rules = json::array();
  rules.push_back(json{{"match", "ten step task"},
                       {"respond", "starting\n```action\nkind: builtin\nworkdir: .\nbody:\necho "
                                   "turn 1 ok\n```"}});
  for (int turn = 1; turn < 9; ++turn) {
    rules.push_back(
        json{{"match", "turn " + std::to_string(turn) + " ok"},
             {"respond", "continuing\n```action\nkind: builtin\nworkdir: .\nbody:\necho turn " +
                             std::to_string(turn + 1) + " ok\n```"}});
  }
  rules.push_back(json{{"match", "turn 9 ok"}, {"respond", "all done. TASK COMPLETE"}});
  scenario.driver.adapter = json{{"kind", "scripted"},
                                 {"rules", std::move(rules)},
                                 {"default", "TASK COMPLETE"},
                                 {"delay_ms", 1000}};
  WorkloadItem mail;
  mail.mail = "ten step task";
  scenario.workload.push_back(mail);
  scenario.oracles.push_back({"invariants", json::object()});
  scenario.oracles.push_back({"infin_bytes_bound", json{{"turns", 10}}});
  scenario.oracles.push_back({"stage_ratio", json{{"min_ratio", 5.0}}});

  ScenarioReport report = run_scenario(scenario, 1);
  for (const OracleResult& oracle : report.oracles) {
    INFO(oracle.name, ": ", oracle.detail);
    CHECK(oracle.passed);
  }
  CHECK(report.metrics.count_per_type[static_cast<int>(PayloadType::InfIn)] == 10);
  CHECK(report.metrics.inferring_ms == 10000);  // ten 1s turns
  CHECK(report.metrics.inferring_ms >=
        5 * (report.metrics.voting_ms + report.metrics.deciding_ms));

  // byte bound, restated directly: the prompt appears exactly once
  std::uint64_t infin_bytes = 0;
  int prompt_copies = 0;
  std::uint64_t max_delta = 0;
  for (const Entry& entry : report.entries) {
    if (const auto* infin = std::get_if<InfInBody>(&entry.payload)) {
      std::uint64_t bytes = serialize_payload(entry.payload).size();
      infin_bytes += bytes;
      std::uint64_t without_prompt = bytes;
      for (const Message& m : infin->delta) {
        if (m.content == prompt) {
          ++prompt_copies;
          without_prompt -= prompt.size();
        }
      }
      max_delta = std::max(max_delta, without_prompt);
    }
  }
  CHECK(prompt_copies == 1);
  CHECK(infin_bytes <= prompt.size() + 10 * max_delta);

  timer.passed = report.all_oracles_passed() && prompt_copies == 1 &&
                 infin_bytes <= prompt.size() + 10 * max_delta;
}

TEST_CASE("criterion 6: backend equivalence and durability under kills") {
  CriterionTimer timer(
      "criterion 6: memory/durable differential (10^4 sequences) + 200 kill trials");
  bool clean = true;

  auto dir = fresh_dir("c6");
  ClientIdentity id = full_access("rw");

  // Differential: identical positions, entries, and poll results over
  // 10^4 random operation sequences.
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  for (int sequence = 0; sequence < 10000; ++sequence) {
    auto clock = std::make_shared<VirtualClock>(7);
    DurableBusOptions options;
    options.sync_mode = SyncMode::Batched;
    options.clock = clock;
    auto path = dir / "diff.agbus";
    std::filesystem::remove(path);
    auto durable = DurableBus::open(path, options);
    MemoryBus memory(clock);

    int ops = 4 + static_cast<int>(rng() % 12);
    for (int op = 0; op < ops; ++op) {
      switch (rng() % 4) {
        case 0: {
          auto type = static_cast<PayloadType>(rng() % kPayloadTypeCount);
          Payload payload;
          switch (type) {
            case PayloadType::Vote:
              payload = VoteBody{rng() % 8, "rule", "r", Verdict::Approve, "ok"};
              break;
            case PayloadType::Commit: payload = CommitBody{rng() % 8}; break;
            case PayloadType::Intent:
              payload = IntentBody{{ActionSpec::Kind::Builtin, "echo x", "."}, 0, rng() % 4};
              break;
            default: payload = MailBody{"m", "payload " + std::to_string(rng() % 64)}; break;
          }
          if (durable->append(id, payload) != memory.append(id, payload)) ++mismatches;
          break;
        }
        case 1: {
          LogPosition start = rng() % 10;
          LogPosition end = start + rng() % 10;
          if (durable->read(id, start, end) != memory.read(id, start, end)) ++mismatches;
          break;
        }
        case 2:
          if (durable->tail() != memory.tail()) ++mismatches;
          break;
        default: {
          LogPosition start = rng() % 10;
          PayloadTypeSet filter{static_cast<PayloadType>(rng() % kPayloadTypeCount)};
          if (durable->poll(id, start, filter, std::chrono::milliseconds(0)) !=
              memory.poll(id, start, filter, std::chrono::milliseconds(0))) {
            ++mismatches;
          }
          break;
        }
      }
      clock->advance(1);
    }
  }
  CHECK(mismatches == 0);
  clean = clean && mismatches == 0;

  // Durability: 200 kill trials; every acknowledged append survives
  // reopen with sync_mode=always.
  int losses = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto path = dir / ("kill-" + std::to_string(trial) + ".agbus");
    int pipe_fd[2];
    REQUIRE(::pipe(pipe_fd) == 0);
    pid_t pid = ::fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
      ::close(pipe_fd[0]);
      try {
        auto bus = DurableBus::open(path);  // sync_mode=always
        for (std::uint64_t i = 0; i < 4000; ++i) {
          LogPosition p = bus->append(full_access("child"),
                                      MailBody{"child", "record " + std::to_string(i)});
          (void)!::write(pipe_fd[1], &p, sizeof(p));
        }
      } catch (...) {
      }
      ::_exit(0);
    }
    ::close(pipe_fd[1]);
    std::this_thread::sleep_for(std::chrono::microseconds(500 + (trial * 37) % 9000));
    ::kill(pid, SIGKILL);
    ::waitpid(pid, nullptr, 0);

    std::uint64_t acked = 0;
    bool any = false;
    LogPosition p;
    while (::read(pipe_fd[0], &p, sizeof(p)) == sizeof(p)) {
      acked = p;
      any = true;
    }
    ::close(pipe_fd[0]);

    auto bus = DurableBus::open(path);
    if (any && bus->tail() < acked + 1) ++losses;
    if (any && bus->tail() >= acked + 1) {
      auto last = bus->read(full_access("check"), acked, acked + 1);
      if (last.size() != 1 ||
          std::get<MailBody>(last[0].payload).body != "record " + std::to_string(acked)) {
        ++losses;
      }
    }
    std::filesystem::remove(path);
  }
  CHECK(losses == 0);
  clean = clean && losses == 0;

  std::filesystem::remove_all(dir);
  timer.passed = clean;
}
