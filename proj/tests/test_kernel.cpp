#include <filesystem>
#include <functional>
#include <thread>

#include "doctest.h"
#include "logact/errors.hpp"
#include "logact/durable_bus.hpp"
#include "logact/kernel.hpp"
#include "logact/serde.hpp"

using namespace logact;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("logact-kernel-" + tag + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

json scripted_hello_adapter() {
  return json{
      {"kind", "scripted"},
      {"rules",
       json::array(
           {json{{"match", "hello task"},
                 {"respond", "on it\n```action\nkind: builtin\nworkdir: .\nbody:\necho done "
                             "marker\n```"}}})},
      {"default", "TASK COMPLETE"}};
}

bool wait_for(const std::function<bool()>& predicate, int ms_budget = 5000) {
  for (int waited = 0; waited < ms_budget; waited += 10) {
    if (predicate()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return predicate();
}

}  // namespace

TEST_CASE("raw mode creates a bus and nothing else") {
  AgentKernel kernel;
  BusSpec spec;
  spec.bus_id = "raw-bus";
  BusInfo info = kernel.create_bus(spec);
  CHECK(info.components.empty());
  CHECK(kernel.list_buses() == std::vector<std::string>{"raw-bus"});

  CHECK_THROWS_AS(kernel.create_bus(spec), Error);  // duplicate id

  LogPosition p = kernel.send_mail("raw-bus", "user", "anyone home?");
  CHECK(p == 0);
  kernel.destroy_bus("raw-bus");
  CHECK(kernel.list_buses().empty());
  CHECK_THROWS_AS(kernel.destroy_bus("raw-bus"), Error);
}

TEST_CASE("kernel identities match the role permission table exactly") {
  AgentKernel kernel;
  BusSpec spec;
  spec.bus_id = "perm-bus";
  spec.auto_decider = DeciderPolicy{DeciderPolicy::Expr::OnByDefault, {}, 0};
  AutoVoterSpec voter;
  voter.descriptor = {"rule", "rule-1"};
  voter.behavior = json{{"kind", "rule"}, {"default", "approve"}};
  spec.auto_voters.push_back(voter);
  SpawnSpec spawn;
  spawn.driver = true;
  spawn.executor = true;
  spawn.adapter = json{{"kind", "echo"}};
  spec.spawn = spawn;
  kernel.create_bus(spec);

  CHECK(kernel.identity("perm-bus", "decider").permissions == role_permissions(Role::Decider));
  CHECK(kernel.identity("perm-bus", "rule-1").permissions == role_permissions(Role::Voter));
  CHECK(kernel.identity("perm-bus", "driver").permissions == role_permissions(Role::Driver));
  CHECK(kernel.identity("perm-bus", "executor").permissions == role_permissions(Role::Executor));

  // least privilege spot checks straight off the table
  Permissions executor = role_permissions(Role::Executor);
  CHECK(executor.appendable == PayloadTypeSet{PayloadType::Result});
  CHECK(executor.pollable == PayloadTypeSet{PayloadType::Commit, PayloadType::Policy});
  CHECK_FALSE(executor.appendable.contains(PayloadType::Vote));
  CHECK_FALSE(executor.appendable.contains(PayloadType::Commit));
  CHECK_FALSE(executor.appendable.contains(PayloadType::Abort));
  CHECK_FALSE(executor.appendable.contains(PayloadType::Policy));
  Permissions voter_perms = role_permissions(Role::Voter);
  CHECK(voter_perms.appendable == PayloadTypeSet{PayloadType::Vote});

  kernel.destroy_bus("perm-bus");
}

TEST_CASE("auto-decider mode: an end-to-end hello task commits every intent") {
  auto workdir = fresh_dir("auto");
  AgentKernel kernel(KernelConfig{workdir, "", nullptr});

  BusSpec spec;
  spec.bus_id = "hello";
  spec.auto_decider = DeciderPolicy{DeciderPolicy::Expr::OnByDefault, {}, 0};
  SpawnSpec spawn;
  spawn.driver = true;
  spawn.executor = true;
  spawn.system_prompt = "kernel hello";
  spawn.adapter = scripted_hello_adapter();
  spec.spawn = spawn;
  spec.initial_mail = "hello task";
  kernel.create_bus(spec);

  ClientIdentity observer = kernel.identity("hello", "observer");
  AgentBus& bus = kernel.bus("hello");
  bool done = wait_for([&] {
    for (const Entry& entry : bus.read(observer, 0, bus.tail())) {
      if (const auto* result = std::get_if<ResultBody>(&entry.payload)) {
        if (result->output.find("done marker") != std::string::npos) return true;
      }
    }
    return false;
  });
  CHECK(done);

  // the intent was committed on the way
  int commits = 0;
  for (const Entry& entry : bus.read(observer, 0, bus.tail())) {
    if (std::holds_alternative<CommitBody>(entry.payload)) ++commits;
  }
  CHECK(commits >= 1);

  kernel.destroy_bus("hello");
  std::filesystem::remove_all(workdir);
}

TEST_CASE("spawn with voters: rule approval gates the task") {
  auto workdir = fresh_dir("voted");
  AgentKernel kernel(KernelConfig{workdir, "", nullptr});

  BusSpec spec;
  spec.bus_id = "voted";
  spec.auto_decider = DeciderPolicy{DeciderPolicy::Expr::FirstVoter, {}, 0};
  spec.decider_timeout_ms = 10000;
  AutoVoterSpec voter;
  voter.descriptor = {"rule", "rule-1"};
  voter.behavior = json{{"kind", "rule"}, {"default", "approve"}, {"rules", json::array()}};
  spec.auto_voters.push_back(voter);
  SpawnSpec spawn;
  spawn.driver = true;
  spawn.executor = true;
  spawn.adapter = scripted_hello_adapter();
  spec.spawn = spawn;
  spec.initial_mail = "hello task";
  kernel.create_bus(spec);

  ClientIdentity observer = kernel.identity("voted", "observer");
  AgentBus& bus = kernel.bus("voted");
  bool done = wait_for([&] {
    for (const Entry& entry : bus.read(observer, 0, bus.tail())) {
      if (const auto* result = std::get_if<ResultBody>(&entry.payload)) {
        if (result->output.find("done marker") != std::string::npos) return true;
      }
    }
    return false;
  });
  CHECK(done);
  bool voted = false;
  for (const Entry& entry : bus.read(observer, 0, bus.tail())) {
    if (std::holds_alternative<VoteBody>(entry.payload)) voted = true;
  }
  CHECK(voted);
  kernel.destroy_bus("voted");
  std::filesystem::remove_all(workdir);
}

TEST_CASE("destroy stops components but keeps the durable bus file for audit") {
  auto workdir = fresh_dir("audit");
  AgentKernel kernel(KernelConfig{workdir, "", nullptr});

  BusSpec spec;
  spec.bus_id = "audited";
  spec.backend.kind = BusBackendSpec::Kind::Durable;
  spec.auto_decider = DeciderPolicy{DeciderPolicy::Expr::OnByDefault, {}, 0};
  BusInfo info = kernel.create_bus(spec);
  REQUIRE_FALSE(info.path.empty());
  kernel.send_mail("audited", "user", "for the record");

  kernel.destroy_bus("audited");
  CHECK(std::filesystem::exists(info.path));

  // reopen the retained file and find the mail
  DurableBusOptions options;
  options.read_only = true;
  auto bus = DurableBus::open(info.path, options);
  bool found = false;
  for (const Entry& entry : bus->read(role_identity(Role::Observer, "o"), 0, bus->tail())) {
    if (const auto* mail = std::get_if<MailBody>(&entry.payload)) {
      if (mail->body == "for the record") found = true;
    }
  }
  CHECK(found);
  std::filesystem::remove_all(workdir);
}

TEST_CASE("bus spec json round trip and validation") {
  json doc{{"bus_id", "spec-bus"},
           {"backend", {{"kind", "durable"}, {"path", "x.bus"}, {"sync", "batched"}}},
           {"auto_decider",
            {{"policy", {{"expr", "or"}, {"kind", "decider"}, {"types", {"rule", "llm"}},
                         {"v", 1}}},
             {"vote_timeout_ms", 1234}}},
           {"auto_voters",
            json::array({json{{"voter_type", "rule"},
                              {"voter_id", "rule-1"},
                              {"behavior", {{"kind", "rule"}, {"default", "approve"}}}}})},
           {"spawn", {{"driver", true}, {"executor", true}}},
           {"initial_mail", "first job"}};
  BusSpec spec = BusSpec::from_json(doc);
  CHECK(spec.bus_id == "spec-bus");
  CHECK(spec.backend.kind == BusBackendSpec::Kind::Durable);
  CHECK(spec.backend.sync_mode == SyncMode::Batched);
  CHECK(spec.decider_timeout_ms == 1234);
  REQUIRE(spec.auto_decider.has_value());
  CHECK(spec.auto_decider->expr == DeciderPolicy::Expr::Or);
  REQUIRE(spec.spawn.has_value());

  BusSpec round = BusSpec::from_json(spec.to_json());
  CHECK(round.to_json() == spec.to_json());

  // spawn without a decider cannot work
  json bad{{"bus_id", "b"}, {"spawn", {{"driver", true}}}};
  CHECK_THROWS_AS(BusSpec::from_json(bad), Error);
}
