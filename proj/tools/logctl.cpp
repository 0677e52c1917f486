#include <signal.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "logact/decider.hpp"
#include "logact/driver.hpp"
#include "logact/durable_bus.hpp"
#include "logact/errors.hpp"
#include "logact/executor.hpp"
#include "logact/kernel.hpp"
#include "logact/serde.hpp"
#include "logact/snapshot_store.hpp"
#include "logact/voter.hpp"

namespace {

using namespace logact;
using nlohmann::json;

volatile sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }

// Stable exit codes for scripting: 0 ok, 2 permission, 3 malformed
// input, 4 unknown bus, 1 anything else.
int exit_code_for(const Error& err) {
  switch (err.code()) {
    case Errc::PermissionDenied: return 2;
    case Errc::MalformedPolicy:
    case Errc::MalformedInput:
    case Errc::MalformedActionBlock:
    case Errc::InvalidRange: return 3;
    case Errc::UnknownBus: return 4;
    default: return 1;
  }
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::MalformedInput, "cannot open '" + path + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) raise(Errc::MalformedInput, "'" + path + "' is not valid JSON");
  return doc;
}

ClientIdentity resolve_identity(const std::string& identity_file) {
  std::string path = identity_file;
  if (path.empty()) {
    if (const char* env = std::getenv("LOGCTL_IDENTITY")) path = env;
  }
  if (path.empty()) return role_identity(Role::Observer, "observer");
  return identity_from_json(load_json_file(path));
}

std::unique_ptr<DurableBus> open_bus(const std::string& path, bool read_only) {
  if (!std::filesystem::exists(path)) {
    raise(Errc::UnknownBus, "no bus file at '" + path + "'");
  }
  DurableBusOptions options;
  options.read_only = read_only;
  return DurableBus::open(path, options);
}

std::string truncate(const std::string& text, bool raw) {
  std::string flat;
  flat.reserve(text.size());
  for (char c : text) flat.push_back(c == '\n' ? ' ' : c);
  if (raw || flat.size() <= 200) return flat;
  return flat.substr(0, 200) + "...";
}

std::string summarize(const Payload& payload, bool raw) {
  return std::visit(
      [&](const auto& body) -> std::string {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, MailBody>) {
          return body.sender + ": " + truncate(body.body, raw);
        } else if constexpr (std::is_same_v<T, InfInBody>) {
          std::size_t bytes = 0;
          for (const Message& m : body.delta) bytes += m.content.size();
          return std::to_string(body.delta.size()) + " message(s), " + std::to_string(bytes) +
                 " bytes";
        } else if constexpr (std::is_same_v<T, InfOutBody>) {
          return std::string(body.intent_extracted ? "[intent] " : "") +
                 truncate(body.text, raw);
        } else if constexpr (std::is_same_v<T, IntentBody>) {
          return std::string(body.action.kind == ActionSpec::Kind::Shell ? "shell" : "builtin") +
                 " @" + body.action.workdir + " epoch=" + std::to_string(body.driver_epoch) +
                 ": " + truncate(body.action.body, raw);
        } else if constexpr (std::is_same_v<T, VoteBody>) {
          return body.voter_type + "/" + body.voter_id + " intent=" +
                 std::to_string(body.intent_position) + " " +
                 std::string(verdict_name(body.verdict)) + ": " +
                 truncate(body.rationale, raw);
        } else if constexpr (std::is_same_v<T, CommitBody>) {
          return "intent=" + std::to_string(body.intent_position);
        } else if constexpr (std::is_same_v<T, AbortBody>) {
          return "intent=" + std::to_string(body.intent_position) + " " +
                 truncate(body.reason, raw);
        } else if constexpr (std::is_same_v<T, ResultBody>) {
          std::string head(result_status_name(body.status));
          if (body.intent_position) head += " intent=" + std::to_string(*body.intent_position);
          return head + ": " + truncate(body.output, raw);
        } else {
          return std::string(policy_kind_name(body.kind)) + " by " + body.issuer + ": " +
                 truncate(body.body.dump(), raw);
        }
      },
      payload);
}

void print_entries(const std::vector<Entry>& entries, bool as_json, bool raw) {
  for (const Entry& entry : entries) {
    if (as_json) {
      std::cout << entry_to_json(entry).dump() << "\n";
    } else {
      std::printf("%6llu  %13llu  %-7s %s\n",
                  static_cast<unsigned long long>(entry.position),
                  static_cast<unsigned long long>(entry.realtime_ts),
                  std::string(payload_type_name(payload_type(entry.payload))).c_str(),
                  summarize(entry.payload, raw).c_str());
    }
  }
  std::fflush(stdout);
}

int cmd_tail(const std::string& bus_path, const std::string& types_csv, bool follow,
             std::uint64_t start, bool as_json, bool raw, const std::string& identity_file) {
  ClientIdentity identity = resolve_identity(identity_file);
  auto bus = open_bus(bus_path, /*read_only=*/true);

  PayloadTypeSet filter;
  if (!types_csv.empty()) {
    std::stringstream ss(types_csv);
    std::string name;
    while (std::getline(ss, name, ',')) filter.insert(payload_type_from_name(name));
  }

  BusClient client{bus.get(), identity};
  LogPosition from = start;
  std::vector<Entry> entries = client.read(from, bus->tail());
  if (!filter.empty()) {
    std::erase_if(entries,
                  [&](const Entry& e) { return !filter.contains(payload_type(e.payload)); });
  }
  print_entries(entries, as_json, raw);
  from = bus->tail();

  while (follow && !g_stop) {
    PayloadTypeSet poll_filter = filter.empty() ? identity.permissions.pollable : filter;
    if (poll_filter.empty()) break;
    std::vector<Entry> fresh = client.poll(from, poll_filter, std::chrono::milliseconds(500));
    print_entries(fresh, as_json, raw);
    if (!fresh.empty()) from = fresh.back().position + 1;
  }
  return 0;
}

int cmd_mail(const std::string& bus_path, const std::string& body, const std::string& sender,
             const std::string& identity_file) {
  ClientIdentity identity = resolve_identity(identity_file);
  auto bus = open_bus(bus_path, /*read_only=*/false);
  BusClient client{bus.get(), identity};
  LogPosition position =
      client.append(Payload(MailBody{sender.empty() ? identity.client_id : sender, body}));
  std::cout << position << "\n";
  return 0;
}

int cmd_policy(const std::string& bus_path, const std::string& doc_file,
               const std::string& identity_file) {
  ClientIdentity identity = resolve_identity(identity_file);
  json doc = load_json_file(doc_file);
  PolicyBody body = make_policy_body(identity.client_id, doc);
  auto bus = open_bus(bus_path, /*read_only=*/false);
  BusClient client{bus.get(), identity};
  LogPosition position = client.append(Payload(body));
  std::cout << position << "\n";
  return 0;
}

int cmd_run(const std::string& role_name, const std::string& config_file) {
  json config = load_json_file(config_file);
  Role role = role_from_name(role_name);

  DurableBusOptions options;
  options.sync_mode =
      config.at("bus").value("sync", "always") == std::string("batched") ? SyncMode::Batched
                                                                         : SyncMode::Always;
  std::string bus_path = config.at("bus").at("path").get<std::string>();
  if (!std::filesystem::exists(bus_path)) {
    raise(Errc::UnknownBus, "no bus file at '" + bus_path + "'");
  }
  auto bus = DurableBus::open(bus_path, options);

  ClientIdentity identity = config.contains("identity")
                                ? identity_from_json(config["identity"])
                                : role_identity(role, std::string(role_name_of(role)));
  BusClient client{bus.get(), identity};

  std::unique_ptr<SnapshotStore> store;
  if (config.contains("snapshot_dir")) {
    store = std::make_unique<SnapshotStore>(config["snapshot_dir"].get<std::string>());
  }

  std::unique_ptr<Component> component;
  switch (role) {
    case Role::Driver: {
      const json& d = config.at("driver");
      DriverConfig driver_config;
      driver_config.driver_id = d.value("driver_id", "driver");
      driver_config.system_prompt = d.value("system_prompt", "");
      auto adapter = make_adapter(d.value("adapter", json{{"kind", "echo"}}));
      component = Driver::boot(client, driver_config, adapter, store.get(),
                               d.value("elect", true));
      break;
    }
    case Role::Voter: {
      const json& v = config.at("voter");
      VoterConfig voter_config;
      voter_config.descriptor.voter_type = v.at("voter_type").get<std::string>();
      voter_config.descriptor.voter_id = v.at("voter_id").get<std::string>();
      if (v.contains("wait_for_types")) {
        for (const auto& t : v["wait_for_types"]) {
          voter_config.wait_for_types.push_back(t.get<std::string>());
        }
      }
      component = Voter::boot(client, voter_config, make_voter_behavior(v.at("behavior"), nullptr),
                              store.get(), v.value("fresh_join", true));
      break;
    }
    case Role::Decider: {
      const json& d = config.at("decider");
      DeciderConfig decider_config;
      decider_config.decider_id = d.value("decider_id", "decider");
      ParsedPolicy parsed = parse_policy(
          d.value("policy", json{{"expr", "on_by_default"}, {"kind", "decider"}, {"v", 1}}));
      decider_config.initial_policy = std::get<DeciderPolicy>(parsed);
      decider_config.vote_timeout_ms = d.value("vote_timeout_ms", 30000ull);
      component = Decider::boot(client, decider_config, store.get());
      break;
    }
    case Role::Executor: {
      const json& e = config.at("executor");
      ExecutorConfig executor_config;
      executor_config.executor_id = e.value("executor_id", "executor");
      executor_config.sandbox_root = e.at("sandbox_root").get<std::string>();
      component = Executor::boot(client, executor_config);
      break;
    }
    default:
      raise(Errc::MalformedInput, "role must be driver, voter, decider, or executor");
  }

  std::fprintf(stderr, "logctl: %s '%s' attached to %s\n", role_name.c_str(),
               component->component_id().c_str(), bus_path.c_str());
  run_component_loop(*component, client, wake_types_for(role), [] { return g_stop != 0; },
                     store.get());
  return 0;
}

int cmd_kernel_create(const std::string& spec_file, const std::string& workdir, bool detach) {
  AgentKernel kernel(KernelConfig{workdir.empty() ? "." : workdir,
                                  std::filesystem::read_symlink("/proc/self/exe"), nullptr});
  BusSpec spec = BusSpec::from_json(load_json_file(spec_file));
  BusInfo info = kernel.create_bus(spec);
  std::cout << "bus " << info.bus_id;
  if (!info.path.empty()) std::cout << " at " << info.path.string();
  std::cout << "\n";
  for (const std::string& component : info.components) {
    std::cout << "  component " << component << "\n";
  }
  std::cout.flush();
  if (detach) return 0;
  while (!g_stop) ::usleep(100000);
  kernel.destroy_bus(info.bus_id);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  ::signal(SIGINT, handle_signal);
  ::signal(SIGTERM, handle_signal);

  CLI::App app{"logctl: operate LogAct agent buses"};
  app.require_subcommand(1);

  std::string bus_path, types_csv, identity_file, body, sender, doc_file, role_name, config_file;
  std::string spec_file, workdir;
  bool follow = false, as_json = false, raw = false, detach = false;
  std::uint64_t start = 0;

  auto* tail = app.add_subcommand("tail", "print entries in position order");
  tail->add_option("bus", bus_path, "bus file")->required();
  tail->add_option("--types", types_csv, "comma-separated payload types");
  tail->add_option("--start", start, "first position");
  tail->add_flag("--follow", follow, "long-poll for new entries");
  tail->add_flag("--json", as_json, "one JSON object per line");
  tail->add_flag("--raw", raw, "do not truncate payload bodies");
  tail->add_option("--identity", identity_file, "identity file");

  auto* mail = app.add_subcommand("mail", "append a mail entry");
  mail->add_option("bus", bus_path, "bus file")->required();
  mail->add_option("--body", body, "mail body")->required();
  mail->add_option("--sender", sender, "sender name");
  mail->add_option("--identity", identity_file, "identity file");

  auto* policy = app.add_subcommand("policy", "append a policy entry");
  policy->add_option("bus", bus_path, "bus file")->required();
  policy->add_option("--file", doc_file, "policy document (JSON)")->required();
  policy->add_option("--identity", identity_file, "identity file");

  auto* run = app.add_subcommand("run", "run one component attached to a bus");
  run->add_option("role", role_name, "driver|voter|decider|executor")->required();
  run->add_option("--config", config_file, "component config (JSON)")->required();

  auto* kernel = app.add_subcommand("kernel", "control plane");
  auto* kcreate = kernel->add_subcommand("create", "create a bus from a spec");
  kcreate->add_option("--spec", spec_file, "bus spec (JSON)")->required();
  kcreate->add_option("--workdir", workdir, "kernel working directory");
  kcreate->add_flag("--detach", detach, "exit after creation, leave components running");

  CLI11_PARSE(app, argc, argv);

  try {
    if (tail->parsed()) {
      return cmd_tail(bus_path, types_csv, follow, start, as_json, raw, identity_file);
    }
    if (mail->parsed()) return cmd_mail(bus_path, body, sender, identity_file);
    if (policy->parsed()) return cmd_policy(bus_path, doc_file, identity_file);
    if (run->parsed()) return cmd_run(role_name, config_file);
    if (kernel->parsed() && kcreate->parsed()) {
      return cmd_kernel_create(spec_file, workdir, detach);
    }
  } catch (const Error& err) {
    std::fprintf(stderr, "logctl: %s\n", err.what());
    return exit_code_for(err);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "logctl: %s\n", err.what());
    return 1;
  }
  return 0;
}
