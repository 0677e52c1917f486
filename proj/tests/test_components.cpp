#include <filesystem>

#include "doctest.h"
#include "logact/decider.hpp"
#include "logact/driver.hpp"
#include "logact/errors.hpp"
#include "logact/executor.hpp"
#include "logact/kernel.hpp"
#include "logact/memory_bus.hpp"
#include "logact/voter.hpp"

using namespace logact;
using nlohmann::json;

namespace {

struct World {
  std::shared_ptr<VirtualClock> clock = std::make_shared<VirtualClock>(1000);
  MemoryBus bus{clock};
  ClientIdentity admin = role_identity(Role::Admin, "admin");

  BusClient client(Role role, const std::string& id) {
    return BusClient{&bus, role_identity(role, id)};
  }
  BusClient admin_client() { return BusClient{&bus, admin}; }

  std::vector<PayloadType> type_sequence() {
    std::vector<PayloadType> types;
    for (const Entry& entry : bus.read(admin, 0, bus.tail())) {
      types.push_back(payload_type(entry.payload));
    }
    return types;
  }
};

std::shared_ptr<ScriptedAdapter> adapter_for(std::initializer_list<ScriptedRule> rules,
                                             const std::string& fallback = "TASK COMPLETE") {
  return std::make_shared<ScriptedAdapter>(std::vector<ScriptedRule>(rules), fallback);
}

std::string with_action(const std::string& prose, const ActionSpec& action) {
  return prose + "\n" + action_block(action);
}

void run_until_idle(Component& component) {
  while (component.step() == StepStatus::Progress) {
  }
}

std::filesystem::path fresh_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("logact-comp-" + tag + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("driver: mail drives one inference turn appending InfIn, InfOut, Intent") {
  World w;
  auto adapter = adapter_for({{"write hello", false,
                               with_action("on it", {ActionSpec::Kind::Shell,
                                                     "echo hi > hello.txt", "."})}});
  Driver driver(w.client(Role::Driver, "driver"), {"driver", "sys prompt", 3, 1}, adapter, 0,
                w.clock);

  w.admin_client().append(Payload(MailBody{"user", "write hello.txt please"}));
  run_until_idle(driver);

  auto types = w.type_sequence();
  REQUIRE(types.size() == 4);
  CHECK(types[0] == PayloadType::Mail);
  CHECK(types[1] == PayloadType::InfIn);
  CHECK(types[2] == PayloadType::InfOut);
  CHECK(types[3] == PayloadType::Intent);

  auto entries = w.bus.read(w.admin, 0, w.bus.tail());
  const auto& infin = std::get<InfInBody>(entries[1].payload);
  REQUIRE(infin.delta.size() == 2);  // system prompt + the mail
  CHECK(infin.delta[0].role == Message::Role::System);
  const auto& intent = std::get<IntentBody>(entries[3].payload);
  CHECK(intent.action.body == "echo hi > hello.txt");
  CHECK(intent.driver_epoch == 0);
  CHECK_FALSE(driver.quiescent());  // waiting on the result
}

TEST_CASE("driver: mail while waiting is buffered into the next InfIn delta") {
  World w;
  auto adapter = adapter_for({{"go", false, with_action("step", {ActionSpec::Kind::Builtin,
                                                                 "echo step1", "."})},
                              {"step1 ok", false, "all done. TASK COMPLETE"}});
  Driver driver(w.client(Role::Driver, "driver"), {"driver", "", 3, 1}, adapter, 0, w.clock);

  w.admin_client().append(Payload(MailBody{"user", "go"}));
  run_until_idle(driver);
  LogPosition intent_pos = w.bus.tail() - 1;
  std::uint64_t intents_before = w.bus.tail();

  // busy driver: incoming mail must not trigger inference or intents
  w.admin_client().append(Payload(MailBody{"user", "extra wish"}));
  CHECK(driver.step() == StepStatus::Idle);
  CHECK(w.bus.tail() == intents_before + 1);  // only the mail itself

  // the result arrives; buffered mail joins the same delta
  w.client(Role::Executor, "executor")
      .append(Payload(ResultBody{intent_pos, ResultStatus::Ok, "step1 ok"}));
  run_until_idle(driver);

  auto entries = w.bus.read(w.admin, 0, w.bus.tail());
  const InfInBody* second_infin = nullptr;
  int infin_count = 0;
  for (const Entry& entry : entries) {
    if (const auto* body = std::get_if<InfInBody>(&entry.payload)) {
      ++infin_count;
      second_infin = body;
    }
  }
  CHECK(infin_count == 2);
  REQUIRE(second_infin != nullptr);
  REQUIRE(second_infin->delta.size() == 2);
  CHECK(second_infin->delta[0].content == "extra wish");
  CHECK(second_infin->delta[1].content == "step1 ok");
  CHECK(driver.quiescent());
}

TEST_CASE("driver: a higher-epoch election fences the driver") {
  World w;
  auto adapter = adapter_for({});
  Driver driver(w.client(Role::Driver, "driver"), {"driver", "", 3, 1}, adapter, 1, w.clock);

  w.admin_client().append(
      Payload(make_policy_body("rival", policy_document(DriverElection{2, "rival"}))));
  CHECK(driver.step() == StepStatus::Fenced);
  CHECK(driver.fenced());
  w.admin_client().append(Payload(MailBody{"user", "anyone there?"}));
  CHECK(driver.step() == StepStatus::Fenced);  // stays down
}

TEST_CASE("driver: bounded inference retries then a diagnostic InfOut") {
  struct FlakyAdapter : InferenceAdapter {
    int calls = 0;
    std::string infer(const Conversation&) override {
      ++calls;
      raise(Errc::AdapterUnavailable, "inference tier is down");
    }
  };
  World w;
  auto adapter = std::make_shared<FlakyAdapter>();
  Driver driver(w.client(Role::Driver, "driver"), {"driver", "", 3, 1}, adapter, 0, w.clock);
  w.admin_client().append(Payload(MailBody{"user", "hello"}));
  run_until_idle(driver);

  CHECK(adapter->calls == 3);
  auto entries = w.bus.read(w.admin, 0, w.bus.tail());
  const auto& infout = std::get<InfOutBody>(entries.back().payload);
  CHECK(infout.text.find("inference unavailable") != std::string::npos);
  CHECK_FALSE(infout.intent_extracted);
  CHECK(driver.quiescent());
}

TEST_CASE("driver_elect: epochs increment and concurrent elections settle") {
  World w;
  BusClient a = w.client(Role::Driver, "driver-a");
  BusClient b = w.client(Role::Driver, "driver-b");

  CHECK(driver_elect(a, "driver-a").epoch == 1);  // fresh bus
  CHECK(driver_elect(b, "driver-b").epoch == 2);
  CHECK(driver_elect(b, "driver-b").epoch == 3);
  CHECK(driver_elect(a, "driver-a").epoch == 4);  // after epoch 3 exists

  // Interleaving: a stale election lands after a same-epoch rival; the
  // election protocol retries so the final epoch is unique and higher.
  ElectionOutcome outcome_a = driver_elect(a, "driver-a");
  // b appends a stale epoch-5 election by hand (as if raced)
  b.append(Payload(make_policy_body("driver-b", policy_document(
                                                    DriverElection{outcome_a.epoch, "driver-b"}))));
  ElectionOutcome retried = driver_elect(b, "driver-b");
  CHECK(retried.epoch > outcome_a.epoch);
}

TEST_CASE("voter: denylist rejects, policy entries amend the rules") {
  World w;
  std::vector<VoterRule> rules{{"*rm -rf*", false, Verdict::Reject, VoterRule::Scope::Body}};
  auto behavior = std::make_unique<RuleVoter>(rules, Verdict::Approve);
  Voter voter(w.client(Role::Voter, "rule-1"), {{"rule", "rule-1"}, {}}, std::move(behavior));

  BusClient driver = w.client(Role::Driver, "driver");
  driver.append(Payload(IntentBody{{ActionSpec::Kind::Shell, "rm -rf /data", "."}, 0, 1}));
  run_until_idle(voter);

  auto entries = w.bus.read(w.admin, 0, w.bus.tail());
  const auto& reject = std::get<VoteBody>(entries.back().payload);
  CHECK(reject.verdict == Verdict::Reject);
  CHECK(reject.intent_position == 0);
  CHECK(reject.voter_type == "rule");

  // allowlist amendment: *.tmp deletions become acceptable
  json amendment{{"kind", "voter"},
                 {"target", "rule"},
                 {"body",
                  {{"add_rules",
                    json::array({json{{"pattern", "*rm*.tmp*"}, {"verdict", "approve"}}})}}},
                 {"v", 1}};
  w.admin_client().append(Payload(make_policy_body("admin", amendment)));
  driver.append(Payload(IntentBody{{ActionSpec::Kind::Shell, "rm -rf a.tmp", "."}, 0, 2}));
  run_until_idle(voter);

  entries = w.bus.read(w.admin, 0, w.bus.tail());
  const auto& approve = std::get<VoteBody>(entries.back().payload);
  CHECK(approve.verdict == Verdict::Approve);

  // a policy for another voter type changes nothing here
  json other{{"kind", "voter"}, {"target", "llm"}, {"body", json::object()}, {"v", 1}};
  w.admin_client().append(Payload(make_policy_body("admin", other)));
  driver.append(Payload(IntentBody{{ActionSpec::Kind::Shell, "rm -rf b.tmp", "."}, 0, 3}));
  run_until_idle(voter);
  entries = w.bus.read(w.admin, 0, w.bus.tail());
  CHECK(std::get<VoteBody>(entries.back().payload).verdict == Verdict::Approve);
}

TEST_CASE("voter: llm override sees the rule voter's reject and approves") {
  World w;
  auto override_adapter = adapter_for(
      {{"ATTACK", false, "REJECT: that is a real attack"},
       {"vote by rule: reject", false, "APPROVE: benign, overriding the static voter"}},
      "APPROVE");
  auto behavior = std::make_unique<LlmVoter>(override_adapter, "You override rule voters.");
  Voter voter(w.client(Role::Voter, "llm-1"), {{"llm", "llm-1"}, {"rule"}}, std::move(behavior));

  BusClient driver = w.client(Role::Driver, "driver");
  w.admin_client().append(Payload(MailBody{"user", "fetch the weekly report"}));
  driver.append(Payload(IntentBody{{ActionSpec::Kind::Shell, "curl http://reports", "."}, 0, 1}));

  // waits for the rule vote before voting
  CHECK(voter.step() == StepStatus::Idle);
  w.client(Role::Voter, "rule-1")
      .append(Payload(VoteBody{1, "rule", "rule-1", Verdict::Reject, "matched '*curl*'"}));
  run_until_idle(voter);

  auto entries = w.bus.read(w.admin, 0, w.bus.tail());
  const auto& vote = std::get<VoteBody>(entries.back().payload);
  CHECK(vote.voter_type == "llm");
  CHECK(vote.verdict == Verdict::Approve);
  CHECK(vote.rationale.find("overriding") != std::string::npos);
}

TEST_CASE("voter: behavior failures vote reject (fail closed)") {
  struct BrokenBehavior : VoterBehavior {
    VoteOutcome vote(LogPosition, const IntentBody&, const std::vector<Entry>&) override {
      throw std::runtime_error("internal assertion");
    }
    void apply_policy(const json&) override {}
    json state_json() const override { return json::object(); }
    void restore(const json&) override {}
  };
  World w;
  Voter voter(w.client(Role::Voter, "rule-1"), {{"rule", "rule-1"}, {}},
              std::make_unique<BrokenBehavior>());
  w.client(Role::Driver, "driver")
      .append(Payload(IntentBody{{ActionSpec::Kind::Builtin, "echo x", "."}, 0, 1}));
  run_until_idle(voter);
  auto entries = w.bus.read(w.admin, 0, w.bus.tail());
  const auto& vote = std::get<VoteBody>(entries.back().payload);
  CHECK(vote.verdict == Verdict::Reject);
  CHECK(vote.rationale.find("voter failure") != std::string::npos);
}

TEST_CASE("decider: the four policy behaviors from the log's point of view") {
  World w;
  BusClient driver = w.client(Role::Driver, "driver");
  BusClient voter = w.client(Role::Voter, "any");

  SUBCASE("on_by_default commits with zero votes") {
    Decider decider(w.client(Role::Decider, "decider"),
                    {"decider", {DeciderPolicy::Expr::OnByDefault, {}, 0}, 1000}, w.clock);
    driver.append(Payload(IntentBody{{ActionSpec::Kind::Builtin, "echo a", "."}, 0, 1}));
    run_until_idle(decider);
    auto entries = w.bus.read(w.admin, 0, w.bus.tail());
    CHECK(std::get<CommitBody>(entries.back().payload).intent_position == 0);
  }

  SUBCASE("first_voter aborts on a first reject") {
    Decider decider(w.client(Role::Decider, "decider"),
                    {"decider", {DeciderPolicy::Expr::FirstVoter, {}, 0}, 1000}, w.clock);
    driver.append(Payload(IntentBody{{ActionSpec::Kind::Builtin, "echo a", "."}, 0, 1}));
    CHECK(decider.step() == StepStatus::Idle);  // no votes yet
    voter.append(Payload(VoteBody{0, "rule", "r", Verdict::Reject, "no"}));
    run_until_idle(decider);
    auto entries = w.bus.read(w.admin, 0, w.bus.tail());
    const auto& abort = std::get<AbortBody>(entries.back().payload);
    CHECK(abort.intent_position == 0);
    CHECK(abort.reason.find("quorum") != std::string::npos);
  }

  SUBCASE("or(rule,llm): reject then approve commits") {
    Decider decider(w.client(Role::Decider, "decider"),
                    {"decider", {DeciderPolicy::Expr::Or, {"rule", "llm"}, 0}, 1000}, w.clock);
    driver.append(Payload(IntentBody{{ActionSpec::Kind::Builtin, "echo a", "."}, 0, 1}));
    voter.append(Payload(VoteBody{0, "rule", "r", Verdict::Reject, "no"}));
    CHECK(decider.step() == StepStatus::Idle);  // undecided: llm can still approve
    voter.append(Payload(VoteBody{0, "llm", "l", Verdict::Approve, "override"}));
    run_until_idle(decider);
    auto entries = w.bus.read(w.admin, 0, w.bus.tail());
    CHECK(std::get<CommitBody>(entries.back().payload).intent_position == 0);
  }

  SUBCASE("and(rule,llm): a missing voter type aborts on the vote timeout") {
    Decider decider(w.client(Role::Decider, "decider"),
                    {"decider", {DeciderPolicy::Expr::And, {"rule", "llm"}, 0}, 1000}, w.clock);
    driver.append(Payload(IntentBody{{ActionSpec::Kind::Builtin, "echo a", "."}, 0, 1}));
    voter.append(Payload(VoteBody{0, "rule", "r", Verdict::Approve, "fine"}));
    CHECK(decider.step() == StepStatus::Idle);
    REQUIRE(decider.next_deadline_ms().has_value());
    w.clock->advance_to(*decider.next_deadline_ms());
    run_until_idle(decider);
    auto entries = w.bus.read(w.admin, 0, w.bus.tail());
    const auto& abort = std::get<AbortBody>(entries.back().payload);
    CHECK(abort.reason.find("timeout") != std::string::npos);
  }
}

TEST_CASE("decider: policy entries govern strictly later intents") {
  World w;
  Decider decider(w.client(Role::Decider, "decider"),
                  {"decider", {DeciderPolicy::Expr::OnByDefault, {}, 0}, 1000}, w.clock);
  BusClient driver = w.client(Role::Driver, "driver");

  driver.append(Payload(IntentBody{{ActionSpec::Kind::Builtin, "echo pre", "."}, 0, 1}));
  run_until_idle(decider);  // committed under on_by_default

  w.admin_client().append(Payload(make_policy_body(
      "admin", json{{"expr", "first_voter"}, {"kind", "decider"}, {"v", 1}})));
  driver.append(Payload(IntentBody{{ActionSpec::Kind::Builtin, "echo post", "."}, 0, 2}));
  CHECK(decider.step() == StepStatus::Idle);  // now needs a vote

  w.client(Role::Voter, "any").append(Payload(VoteBody{3, "rule", "r", Verdict::Approve, "ok"}));
  run_until_idle(decider);
  auto entries = w.bus.read(w.admin, 0, w.bus.tail());
  CHECK(std::get<CommitBody>(entries.back().payload).intent_position == 3);
}

TEST_CASE("executor: runs committed actions in the jail and skips duplicates") {
  World w;
  auto sandbox = fresh_dir("exec");
  Executor executor(w.client(Role::Executor, "executor"), {"executor", sandbox}, w.clock);
  BusClient driver = w.client(Role::Driver, "driver");
  BusClient decider = w.client(Role::Decider, "decider");

  driver.append(Payload(IntentBody{{ActionSpec::Kind::Shell, "echo hi", "."}, 0, 1}));
  decider.append(Payload(CommitBody{0}));
  run_until_idle(executor);

  auto entries = w.bus.read(w.admin, 0, w.bus.tail());
  const auto& result = std::get<ResultBody>(entries.back().payload);
  CHECK(result.status == ResultStatus::Ok);
  CHECK(result.output.find("hi") != std::string::npos);
  REQUIRE(result.intent_position.has_value());
  CHECK(*result.intent_position == 0);

  // duplicate commit: no second execution, no second result
  LogPosition tail_before = w.bus.tail();
  decider.append(Payload(CommitBody{0}));
  run_until_idle(executor);
  CHECK(w.bus.tail() == tail_before + 1);  // only the duplicate commit itself

  std::filesystem::remove_all(sandbox);
}

TEST_CASE("executor: workdir escaping the sandbox is refused without running") {
  World w;
  auto sandbox = fresh_dir("jail");
  auto outside_marker = sandbox.parent_path() / "logact-jail-marker";
  std::filesystem::remove(outside_marker);

  Executor executor(w.client(Role::Executor, "executor"), {"executor", sandbox}, w.clock);
  BusClient driver = w.client(Role::Driver, "driver");
  BusClient decider = w.client(Role::Decider, "decider");

  driver.append(Payload(IntentBody{
      {ActionSpec::Kind::Shell, "echo pwned > logact-jail-marker", "../.."}, 0, 1}));
  decider.append(Payload(CommitBody{0}));
  run_until_idle(executor);

  auto entries = w.bus.read(w.admin, 0, w.bus.tail());
  const auto& result = std::get<ResultBody>(entries.back().payload);
  CHECK(result.status == ResultStatus::Error);
  CHECK(result.output.find("sandbox violation") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(outside_marker));

  std::filesystem::remove_all(sandbox);
}

TEST_CASE("executor: escape_append probes are denied by the type ACL") {
  World w;
  auto sandbox = fresh_dir("escape");
  Executor executor(w.client(Role::Executor, "executor"), {"executor", sandbox}, w.clock);
  BusClient driver = w.client(Role::Driver, "driver");
  BusClient decider = w.client(Role::Decider, "decider");

  const char* forged_types[] = {"Vote", "Commit", "Abort", "Policy"};
  for (int i = 0; i < 4; ++i) {
    driver.append(Payload(IntentBody{
        {ActionSpec::Kind::Builtin, std::string("escape_append ") + forged_types[i], "."},
        0, static_cast<std::uint64_t>(i + 1)}));
    decider.append(Payload(CommitBody{w.bus.tail() - 1}));
  }
  run_until_idle(executor);

  int blocked = 0;
  for (const Entry& entry : w.bus.read(w.admin, 0, w.bus.tail())) {
    if (const auto* result = std::get_if<ResultBody>(&entry.payload)) {
      CHECK(result->status == ResultStatus::Error);
      CHECK(result->output.find("escape blocked") != std::string::npos);
      ++blocked;
    }
    // nothing but the intents and commits we appended plus results
    PayloadType type = payload_type(entry.payload);
    bool executor_privileged = type == PayloadType::Vote || type == PayloadType::Abort ||
                               type == PayloadType::Policy;
    CHECK_FALSE(executor_privileged);
  }
  CHECK(blocked == 4);
  std::filesystem::remove_all(sandbox);
}
