#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "logact/kernel.hpp"
#include "logact/policy.hpp"

namespace logact::harness {

// Triggers are keyed to the bus append count (deterministic) or to
// virtual time; an unset trigger fires immediately.
struct Trigger {
  std::uint64_t at_entries{0};
  std::optional<std::uint64_t> at_ms;

  bool due(std::uint64_t tail, std::uint64_t now_ms) const {
    if (at_ms) return now_ms >= *at_ms && tail >= at_entries;
    return tail >= at_entries;
  }
};

struct WorkloadItem {
  Trigger at;
  std::optional<std::string> mail;
  std::optional<nlohmann::json> policy;      // appended through the admin identity
  std::optional<AutoVoterSpec> start_voter;  // a voter shows up and starts voting
};

enum class FaultKind : std::uint8_t { Kill, Pause, Resume, Restart };

struct FaultSpec {
  Trigger at;
  std::string target;  // component id: "driver", "decider", "executor", or a voter id
  FaultKind kind{FaultKind::Kill};
};

struct OracleSpec {
  std::string check;
  nlohmann::json params;
};

struct DriverSpec {
  std::string system_prompt{"You are a deconstructed agent."};
  nlohmann::json adapter{{"kind", "echo"}};
};

// A deterministic end-to-end run: bus + components + scripted inference
// + workload + fault schedule + oracles over the final bus and sandbox.
struct Scenario {
  std::string name{"scenario"};
  BusBackendSpec backend;  // durable path is chosen by the engine if empty
  DeciderPolicy initial_policy;
  std::uint64_t decider_timeout_ms{30000};
  bool start_decider{true};
  bool start_executor{true};
  bool start_driver{true};
  std::vector<AutoVoterSpec> voters;
  DriverSpec driver;
  std::vector<WorkloadItem> workload;
  std::vector<FaultSpec> faults;
  std::vector<OracleSpec> oracles;
  std::uint64_t max_rounds{200000};

  static Scenario from_json(const nlohmann::json& doc);
  static Scenario from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// The scenario library mirrored by files under scenarios/.
Scenario hello_task_scenario(std::uint64_t inference_delay_ms = 0);
Scenario hot_swap_scenario(int tasks_per_phase = 10);
Scenario executor_kill_scenario(int total_items = 50, int kill_after_item = 20);

}  // namespace logact::harness
