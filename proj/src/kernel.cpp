#include "logact/kernel.hpp"

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <fstream>
#include <thread>

#include "logact/decider.hpp"
#include "logact/driver.hpp"
#include "logact/errors.hpp"
#include "logact/executor.hpp"
#include "logact/memory_bus.hpp"
#include "logact/serde.hpp"
#include "logact/snapshot_store.hpp"

extern char** environ;

namespace logact {
namespace {

using nlohmann::json;

constexpr auto kIn = PayloadType::InfIn;
constexpr auto kOut = PayloadType::InfOut;
constexpr auto kIntent = PayloadType::Intent;
constexpr auto kVote = PayloadType::Vote;
constexpr auto kCommit = PayloadType::Commit;
constexpr auto kAbort = PayloadType::Abort;
constexpr auto kResult = PayloadType::Result;
constexpr auto kMail = PayloadType::Mail;
constexpr auto kPolicy = PayloadType::Policy;

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot write " + path.string());
  out << text;
}

pid_t spawn_runner(const std::filesystem::path& runner, const std::vector<std::string>& args) {
  std::vector<std::string> argv_store;
  argv_store.push_back(runner.string());
  for (const auto& a : args) argv_store.push_back(a);
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t pid = -1;
  int rc = ::posix_spawn(&pid, runner.c_str(), nullptr, nullptr, argv.data(), environ);
  if (rc != 0) raise(Errc::SpawnFailure, "posix_spawn " + runner.string() + " failed");
  return pid;
}

}  // namespace

PayloadTypeSet wake_types_for(Role role) {
  switch (role) {
    case Role::Driver: return {kMail, kResult, kAbort, kPolicy};
    case Role::Voter: return {kIntent, kVote, kPolicy};
    case Role::Decider: return {kIntent, kVote, kPolicy};
    case Role::Executor: return {kCommit, kPolicy};
    default: return PayloadTypeSet::all();
  }
}

Role role_from_name(const std::string& name) {
  if (name == "driver") return Role::Driver;
  if (name == "voter") return Role::Voter;
  if (name == "decider") return Role::Decider;
  if (name == "executor") return Role::Executor;
  if (name == "admin") return Role::Admin;
  if (name == "observer") return Role::Observer;
  raise(Errc::MalformedInput, "unknown role: " + name);
}

std::string_view role_name_of(Role role) {
  switch (role) {
    case Role::Driver: return "driver";
    case Role::Voter: return "voter";
    case Role::Decider: return "decider";
    case Role::Executor: return "executor";
    case Role::Admin: return "admin";
    case Role::Observer: return "observer";
  }
  raise(Errc::MalformedInput, "bad role value");
}

Permissions role_permissions(Role role) {
  Permissions p;
  switch (role) {
    case Role::Driver:
      // Policy append covers the driver_election entry a booting driver
      // writes to fence its predecessor.
      p.appendable = {kIn, kOut, kIntent, kPolicy};
      p.readable = {kMail, kIn, kOut, kIntent, kAbort, kResult, kPolicy};
      p.pollable = {kMail, kResult, kAbort, kPolicy};
      break;
    case Role::Voter:
      p.appendable = {kVote};
      p.readable = {kIntent, kPolicy, kOut, kVote, kResult, kMail};
      p.pollable = {kIntent, kPolicy, kVote};
      break;
    case Role::Decider:
      p.appendable = {kCommit, kAbort};
      p.readable = {kIntent, kVote, kPolicy, kCommit, kAbort};
      p.pollable = {kIntent, kVote, kPolicy};
      break;
    case Role::Executor:
      p.appendable = {kResult};
      p.readable = {kCommit, kPolicy, kIntent};
      p.pollable = {kCommit, kPolicy};
      break;
    case Role::Admin:
      p.appendable = {kMail, kPolicy};
      p.readable = PayloadTypeSet::all();
      p.pollable = PayloadTypeSet::all();
      break;
    case Role::Observer:
      p.readable = PayloadTypeSet::all();
      p.pollable = PayloadTypeSet::all();
      break;
  }
  return p;
}

ClientIdentity role_identity(Role role, const std::string& client_id) {
  return ClientIdentity{client_id, role_permissions(role)};
}

BusSpec BusSpec::from_json(const json& doc) {
  BusSpec spec;
  spec.bus_id = doc.at("bus_id").get<std::string>();
  if (doc.contains("backend")) {
    const json& backend = doc["backend"];
    std::string kind = backend.value("kind", "memory");
    if (kind == "memory") {
      spec.backend.kind = BusBackendSpec::Kind::Memory;
    } else if (kind == "durable") {
      spec.backend.kind = BusBackendSpec::Kind::Durable;
      spec.backend.path = backend.at("path").get<std::string>();
    } else {
      raise(Errc::MalformedInput, "unknown backend kind: " + kind);
    }
    std::string sync = backend.value("sync", "always");
    if (sync == "always") {
      spec.backend.sync_mode = SyncMode::Always;
    } else if (sync == "batched") {
      spec.backend.sync_mode = SyncMode::Batched;
    } else {
      raise(Errc::MalformedInput, "unknown sync mode: " + sync);
    }
  }
  if (doc.contains("auto_decider")) {
    ParsedPolicy parsed = parse_policy(doc["auto_decider"].at("policy"));
    if (!std::holds_alternative<DeciderPolicy>(parsed)) {
      raise(Errc::MalformedInput, "auto_decider.policy must be a decider policy");
    }
    spec.auto_decider = std::get<DeciderPolicy>(parsed);
    spec.decider_timeout_ms = doc["auto_decider"].value("vote_timeout_ms", 30000ull);
  }
  if (doc.contains("auto_voters")) {
    for (const json& v : doc["auto_voters"]) {
      AutoVoterSpec voter;
      voter.descriptor.voter_type = v.at("voter_type").get<std::string>();
      voter.descriptor.voter_id = v.at("voter_id").get<std::string>();
      voter.behavior = v.at("behavior");
      if (v.contains("wait_for_types")) {
        for (const auto& t : v["wait_for_types"]) {
          voter.wait_for_types.push_back(t.get<std::string>());
        }
      }
      spec.auto_voters.push_back(std::move(voter));
    }
  }
  if (doc.contains("spawn")) {
    const json& s = doc["spawn"];
    SpawnSpec spawn;
    spawn.driver = s.value("driver", false);
    spawn.executor = s.value("executor", false);
    spawn.system_prompt = s.value("system_prompt", "");
    spawn.adapter = s.value("adapter", json{{"kind", "echo"}});
    if (s.contains("sandbox_root")) spawn.sandbox_root = s["sandbox_root"].get<std::string>();
    spec.spawn = std::move(spawn);
  }
  if (doc.contains("identities")) {
    for (const json& identity : doc["identities"]) {
      spec.identities.push_back(identity_from_json(identity));
    }
  }
  spec.initial_mail = doc.value("initial_mail", "");
  // Spawned sub-agents need something deciding their intents.
  if (spec.spawn && (spec.spawn->driver || spec.spawn->executor) && !spec.auto_decider) {
    raise(Errc::MalformedInput, "spawn mode requires auto_decider");
  }
  return spec;
}

json BusSpec::to_json() const {
  json doc{{"bus_id", bus_id}};
  json backend_doc{
      {"kind", backend.kind == BusBackendSpec::Kind::Memory ? "memory" : "durable"},
      {"sync", backend.sync_mode == SyncMode::Always ? "always" : "batched"}};
  if (backend.kind == BusBackendSpec::Kind::Durable) backend_doc["path"] = backend.path.string();
  doc["backend"] = std::move(backend_doc);
  if (auto_decider) {
    doc["auto_decider"] = json{{"policy", policy_document(*auto_decider)},
                               {"vote_timeout_ms", decider_timeout_ms}};
  }
  if (!auto_voters.empty()) {
    json voters = json::array();
    for (const AutoVoterSpec& v : auto_voters) {
      voters.push_back(json{{"behavior", v.behavior},
                            {"voter_id", v.descriptor.voter_id},
                            {"voter_type", v.descriptor.voter_type},
                            {"wait_for_types", v.wait_for_types}});
    }
    doc["auto_voters"] = std::move(voters);
  }
  if (spawn) {
    json s{{"adapter", spawn->adapter},
           {"driver", spawn->driver},
           {"executor", spawn->executor},
           {"system_prompt", spawn->system_prompt}};
    if (!spawn->sandbox_root.empty()) s["sandbox_root"] = spawn->sandbox_root.string();
    doc["spawn"] = std::move(s);
  }
  if (!identities.empty()) {
    json ids = json::array();
    for (const ClientIdentity& identity : identities) ids.push_back(identity_to_json(identity));
    doc["identities"] = std::move(ids);
  }
  if (!initial_mail.empty()) doc["initial_mail"] = initial_mail;
  return doc;
}

AgentKernel::AgentKernel(KernelConfig config) : config_(std::move(config)) {
  if (!config_.clock) config_.clock = SystemClock::instance();
}

struct AgentKernel::BusRuntime {
  std::string bus_id;
  BusSpec spec;
  std::shared_ptr<AgentBus> bus;
  std::filesystem::path bus_path;
  std::map<std::string, ClientIdentity> identities;
  std::unique_ptr<SnapshotStore> snapshots;
  std::vector<std::unique_ptr<Component>> components;
  std::vector<std::jthread> threads;
  std::vector<std::pair<pid_t, std::string>> processes;
  std::vector<std::string> component_labels;

  void start_thread(std::unique_ptr<Component> component, const ClientIdentity& identity,
                    Role role) {
    Component* raw = component.get();
    BusClient client{bus.get(), identity};
    const SnapshotStore* store = snapshots.get();
    component_labels.push_back(std::string(role_name_of(role)) + ":" + raw->component_id());
    components.push_back(std::move(component));
    threads.emplace_back([raw, client, store, role](std::stop_token token) {
      run_component_loop(*raw, client, wake_types_for(role),
                         [&token] { return token.stop_requested(); }, store);
    });
  }

  void start_process(const KernelConfig& config, Role role, const ClientIdentity& identity,
                     json role_config) {
    json run_config{
        {"bus", {{"path", bus_path.string()},
                 {"sync", spec.backend.sync_mode == SyncMode::Always ? "always" : "batched"}}},
        {"identity", identity_to_json(identity)},
        {"role", std::string(role_name_of(role))},
        {std::string(role_name_of(role)), std::move(role_config)}};
    if (snapshots) run_config["snapshot_dir"] = snapshots->dir().string();
    std::filesystem::path config_path =
        config.workdir / "spawn" / bus_id / (identity.client_id + ".json");
    write_text_file(config_path, run_config.dump(2));
    pid_t pid = spawn_runner(config.runner_binary, {"run", std::string(role_name_of(role)),
                                                    "--config", config_path.string()});
    component_labels.push_back(std::string(role_name_of(role)) + ":" + identity.client_id +
                               "@pid" + std::to_string(pid));
    processes.emplace_back(pid, identity.client_id);
  }

  BusInfo info() const {
    BusInfo out;
    out.bus_id = bus_id;
    out.path = bus_path;
    for (const auto& [id, identity] : identities) out.client_ids.push_back(id);
    out.components = component_labels;
    return out;
  }

  void teardown() {
    for (auto& thread : threads) thread.request_stop();
    if (bus) bus->close();
    for (auto& thread : threads) {
      if (thread.joinable()) thread.join();
    }
    threads.clear();
    components.clear();
    for (auto& [pid, label] : processes) {
      ::kill(pid, SIGTERM);
    }
    for (auto& [pid, label] : processes) {
      for (int i = 0; i < 200; ++i) {
        int status = 0;
        pid_t done = ::waitpid(pid, &status, WNOHANG);
        if (done == pid || (done < 0 && errno == ECHILD)) {
          pid = -1;
          break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      if (pid > 0) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, nullptr, 0);
      }
    }
    processes.clear();
  }
};

AgentKernel::~AgentKernel() {
  std::lock_guard lock(mutex_);
  for (auto& [id, runtime] : buses_) runtime->teardown();
  buses_.clear();
}

AgentKernel::BusRuntime& AgentKernel::runtime(const std::string& bus_id) {
  auto it = buses_.find(bus_id);
  if (it == buses_.end()) raise(Errc::UnknownBus, "no bus named '" + bus_id + "'");
  return *it->second;
}

const AgentKernel::BusRuntime& AgentKernel::runtime(const std::string& bus_id) const {
  auto it = buses_.find(bus_id);
  if (it == buses_.end()) raise(Errc::UnknownBus, "no bus named '" + bus_id + "'");
  return *it->second;
}

BusInfo AgentKernel::create_bus(const BusSpec& spec) {
  std::lock_guard lock(mutex_);
  if (buses_.count(spec.bus_id)) {
    raise(Errc::DuplicateBusId, "bus '" + spec.bus_id + "' already exists");
  }

  auto rt = std::make_unique<BusRuntime>();
  rt->bus_id = spec.bus_id;
  rt->spec = spec;

  bool durable = spec.backend.kind == BusBackendSpec::Kind::Durable;
  if (durable) {
    rt->bus_path = spec.backend.path.empty()
                       ? config_.workdir / "buses" / (spec.bus_id + ".bus")
                       : spec.backend.path;
    std::filesystem::create_directories(rt->bus_path.parent_path());
    DurableBusOptions options;
    options.sync_mode = spec.backend.sync_mode;
    options.clock = config_.clock;
    rt->bus = DurableBus::open(rt->bus_path, options);
    rt->snapshots = std::make_unique<SnapshotStore>(config_.workdir / "snapshots" / spec.bus_id);
  } else {
    rt->bus = std::make_shared<MemoryBus>(config_.clock);
  }

  rt->identities.emplace("admin", role_identity(Role::Admin, "admin"));
  rt->identities.emplace("observer", role_identity(Role::Observer, "observer"));
  for (const ClientIdentity& extra : spec.identities) {
    if (!extra.permissions.valid()) {
      raise(Errc::MalformedInput, "identity '" + extra.client_id + "' polls unreadable types");
    }
    rt->identities.emplace(extra.client_id, extra);
  }

  BusClient admin{rt->bus.get(), rt->identities.at("admin")};

  try {
    if (spec.auto_decider) {
      // Make the starting policy part of the audit record.
      admin.append(Payload(make_policy_body("admin", policy_document(*spec.auto_decider))));
      auto identity = role_identity(Role::Decider, "decider");
      rt->identities.emplace(identity.client_id, identity);
      DeciderConfig config{"decider", *spec.auto_decider, spec.decider_timeout_ms};
      auto decider = Decider::boot(BusClient{rt->bus.get(), identity}, config,
                                   rt->snapshots.get(), config_.clock);
      rt->start_thread(std::move(decider), identity, Role::Decider);
    }

    for (const AutoVoterSpec& voter_spec : spec.auto_voters) {
      auto identity = role_identity(Role::Voter, voter_spec.descriptor.voter_id);
      rt->identities.emplace(identity.client_id, identity);
      VoterConfig config{voter_spec.descriptor, voter_spec.wait_for_types};
      auto voter = Voter::boot(BusClient{rt->bus.get(), identity}, config,
                               make_voter_behavior(voter_spec.behavior, config_.clock),
                               rt->snapshots.get(), /*fresh_join=*/true);
      rt->start_thread(std::move(voter), identity, Role::Voter);
    }

    if (spec.spawn) {
      bool use_processes = durable && !config_.runner_binary.empty();
      std::filesystem::path sandbox = spec.spawn->sandbox_root.empty()
                                          ? config_.workdir / "sandbox" / spec.bus_id
                                          : spec.spawn->sandbox_root;
      if (spec.spawn->executor) {
        auto identity = role_identity(Role::Executor, "executor");
        rt->identities.emplace(identity.client_id, identity);
        if (use_processes) {
          rt->start_process(config_, Role::Executor, identity,
                            json{{"executor_id", "executor"},
                                 {"sandbox_root", sandbox.string()}});
        } else {
          auto executor = Executor::boot(BusClient{rt->bus.get(), identity},
                                         ExecutorConfig{"executor", sandbox}, config_.clock);
          rt->start_thread(std::move(executor), identity, Role::Executor);
        }
      }
      if (spec.spawn->driver) {
        auto identity = role_identity(Role::Driver, "driver");
        rt->identities.emplace(identity.client_id, identity);
        if (use_processes) {
          rt->start_process(config_, Role::Driver, identity,
                            json{{"adapter", spec.spawn->adapter},
                                 {"driver_id", "driver"},
                                 {"elect", true},
                                 {"system_prompt", spec.spawn->system_prompt}});
        } else {
          DriverConfig config;
          config.driver_id = "driver";
          config.system_prompt = spec.spawn->system_prompt;
          auto driver = Driver::boot(BusClient{rt->bus.get(), identity}, config,
                                     make_adapter(spec.spawn->adapter, config_.clock),
                                     rt->snapshots.get(), /*elect=*/true, config_.clock);
          rt->start_thread(std::move(driver), identity, Role::Driver);
        }
      }
    }

    // Spawned processes fence themselves in asynchronously (the executor's
    // recovery result, the driver's election). Wait for those entries so
    // the initial mail lands after the machine is up.
    if (spec.spawn && !rt->processes.empty()) {
      bool need_recovery = spec.spawn->executor;
      bool need_election = spec.spawn->driver;
      auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
      while (need_recovery || need_election) {
        for (const Entry& entry : admin.read(0, rt->bus->tail())) {
          if (const auto* result = std::get_if<ResultBody>(&entry.payload)) {
            if (result->status == ResultStatus::Recovery) need_recovery = false;
          } else if (const auto* policy = std::get_if<PolicyBody>(&entry.payload)) {
            if (policy->kind == PolicyKind::DriverElection) need_election = false;
          }
        }
        if (!need_recovery && !need_election) break;
        if (std::chrono::steady_clock::now() > deadline) {
          raise(Errc::SpawnFailure, "spawned components did not come up on bus '" +
                                        spec.bus_id + "'");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
    }

    if (!spec.initial_mail.empty()) {
      admin.append(Payload(MailBody{"kernel", spec.initial_mail}));
    }
  } catch (const Error&) {
    rt->teardown();
    throw;
  } catch (const std::exception& err) {
    rt->teardown();
    raise(Errc::SpawnFailure, err.what());
  }

  BusInfo info = rt->info();
  buses_.emplace(spec.bus_id, std::move(rt));
  return info;
}

LogPosition AgentKernel::send_mail(const std::string& bus_id, const std::string& sender,
                                   const std::string& body) {
  std::lock_guard lock(mutex_);
  BusRuntime& rt = runtime(bus_id);
  BusClient admin{rt.bus.get(), rt.identities.at("admin")};
  return admin.append(Payload(MailBody{sender, body}));
}

std::vector<std::string> AgentKernel::list_buses() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, rt] : buses_) ids.push_back(id);
  return ids;
}

void AgentKernel::destroy_bus(const std::string& bus_id) {
  std::lock_guard lock(mutex_);
  BusRuntime& rt = runtime(bus_id);
  rt.teardown();
  buses_.erase(bus_id);
}

AgentBus& AgentKernel::bus(const std::string& bus_id) {
  std::lock_guard lock(mutex_);
  return *runtime(bus_id).bus;
}

ClientIdentity AgentKernel::identity(const std::string& bus_id,
                                     const std::string& client_id) const {
  std::lock_guard lock(mutex_);
  const BusRuntime& rt = runtime(bus_id);
  auto it = rt.identities.find(client_id);
  if (it == rt.identities.end()) {
    raise(Errc::UnknownTarget, "no identity '" + client_id + "' on bus '" + bus_id + "'");
  }
  return it->second;
}

BusInfo AgentKernel::info(const std::string& bus_id) const {
  std::lock_guard lock(mutex_);
  return runtime(bus_id).info();
}

std::unique_ptr<VoterBehavior> make_voter_behavior(const nlohmann::json& doc,
                                                   std::shared_ptr<Clock> clock) {
  std::string kind = doc.value("kind", "rule");
  if (kind == "rule") return RuleVoter::from_json(doc);
  if (kind == "llm") {
    return std::make_unique<LlmVoter>(make_adapter(doc.at("adapter"), std::move(clock)),
                                      doc.value("system_prompt", "You vote on agent actions."));
  }
  raise(Errc::MalformedInput, "unknown voter behavior kind: " + kind);
}

void run_component_loop(Component& component, const BusClient& client, PayloadTypeSet wake_types,
                        const std::function<bool()>& stop_requested, const SnapshotStore* store) {
  while (!stop_requested()) {
    StepStatus status;
    try {
      status = component.step();
    } catch (const Error&) {
      break;  // bus closed or permissions revoked; power down
    }
    if (status == StepStatus::Fenced) break;
    if (status == StepStatus::Progress) continue;
    try {
      client.poll(component.played_up_to(), wake_types, std::chrono::milliseconds(50));
    } catch (const Error&) {
      break;
    }
  }
  if (store) {
    try {
      store->put(component.make_snapshot());
    } catch (const Error&) {
      // Snapshots are an optimization; recovery falls back to full replay.
    }
  }
}

}  // namespace logact
