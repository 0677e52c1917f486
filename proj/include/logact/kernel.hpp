#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "logact/bus.hpp"
#include "logact/clock.hpp"
#include "logact/durable_bus.hpp"
#include "logact/policy.hpp"
#include "logact/voter.hpp"

namespace logact {

enum class Role : std::uint8_t { Driver, Voter, Decider, Executor, Admin, Observer };

Role role_from_name(const std::string& name);
std::string_view role_name_of(Role role);

// The least-privilege permission set for each state-machine role: which
// entry types it appends and which it plays.
Permissions role_permissions(Role role);
ClientIdentity role_identity(Role role, const std::string& client_id);

// Entry types that wake an idle component of this role.
PayloadTypeSet wake_types_for(Role role);

struct BusBackendSpec {
  enum class Kind : std::uint8_t { Memory, Durable };
  Kind kind{Kind::Memory};
  std::filesystem::path path;  // durable only
  SyncMode sync_mode{SyncMode::Always};
};

struct AutoVoterSpec {
  VoterDescriptor descriptor;
  nlohmann::json behavior;  // {"kind":"rule"|"llm", ...}, docs/formats.md
  std::vector<std::string> wait_for_types;
};

struct SpawnSpec {
  bool driver{false};
  bool executor{false};
  std::string system_prompt;
  nlohmann::json adapter;  // inference adapter config for the driver
  std::filesystem::path sandbox_root;  // default: <workdir>/sandbox/<bus_id>
};

struct BusSpec {
  std::string bus_id;
  BusBackendSpec backend;
  std::optional<DeciderPolicy> auto_decider;
  std::uint64_t decider_timeout_ms{30000};
  std::vector<AutoVoterSpec> auto_voters;
  std::optional<SpawnSpec> spawn;
  std::vector<ClientIdentity> identities;  // extra identities beyond the role set
  std::string initial_mail;  // delivered as the first Mail entry when set

  static BusSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct BusInfo {
  std::string bus_id;
  std::filesystem::path path;  // empty for the in-memory backend
  std::vector<std::string> client_ids;
  std::vector<std::string> components;  // "<role>:<id>[@pid]"
};

struct KernelConfig {
  std::filesystem::path workdir{"."};   // sandboxes, snapshots, spawn configs
  std::filesystem::path runner_binary;  // logctl path; enables process spawn
  std::shared_ptr<Clock> clock;
};

// Control plane: creates buses and optionally stands up parts of the
// deconstructed state machine on them. Raw mode creates the bus alone;
// Auto-Decider / Auto-Voter / Spawn start components, each holding only
// its role's permissions. With a durable backend and a runner binary,
// the driver and executor run as separate OS processes; everything else
// runs on kernel threads.
class AgentKernel {
 public:
  explicit AgentKernel(KernelConfig config = {});
  ~AgentKernel();

  AgentKernel(const AgentKernel&) = delete;
  AgentKernel& operator=(const AgentKernel&) = delete;

  BusInfo create_bus(const BusSpec& spec);
  LogPosition send_mail(const std::string& bus_id, const std::string& sender,
                        const std::string& body);
  std::vector<std::string> list_buses() const;
  // Stops spawned components, then releases the bus. Durable bus files
  // are retained on disk for audit.
  void destroy_bus(const std::string& bus_id);

  AgentBus& bus(const std::string& bus_id);
  ClientIdentity identity(const std::string& bus_id, const std::string& client_id) const;
  BusInfo info(const std::string& bus_id) const;

 private:
  struct BusRuntime;

  BusRuntime& runtime(const std::string& bus_id);
  const BusRuntime& runtime(const std::string& bus_id) const;

  KernelConfig config_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<BusRuntime>> buses_;
};

// Builds a voter behavior from its config document.
std::unique_ptr<VoterBehavior> make_voter_behavior(const nlohmann::json& doc,
                                                   std::shared_ptr<Clock> clock);

// Drives one component until stop: step while it makes progress, then
// block on the wake types. Fenced components return (power down).
void run_component_loop(Component& component, const BusClient& client, PayloadTypeSet wake_types,
                        const std::function<bool()>& stop_requested,
                        const SnapshotStore* store = nullptr);

}  // namespace logact
