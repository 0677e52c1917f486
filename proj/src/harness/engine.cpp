#include "logact/harness/engine.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "logact/decider.hpp"
#include "logact/driver.hpp"
#include "logact/durable_bus.hpp"
#include "logact/errors.hpp"
#include "logact/executor.hpp"
#include "logact/memory_bus.hpp"
#include "logact/serde.hpp"
#include "logact/snapshot_store.hpp"
#include "logact/voter.hpp"

namespace logact::harness {
namespace {

using nlohmann::json;

std::uint64_t fnv1a(std::uint64_t hash, std::string_view bytes) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

struct Slot {
  std::string id;
  Role role{Role::Driver};
  std::unique_ptr<Component> component;
  std::function<std::unique_ptr<Component>()> recover;
  bool paused{false};
  bool powered_down{false};  // fenced drivers stay down
  std::uint64_t progress_steps{0};
};

struct OracleContext {
  const Scenario& scenario;
  const std::vector<Entry>& entries;
  const StageMetrics& metrics;
  std::filesystem::path sandbox;
  const std::vector<Violation>& violations;
};

std::string join_violations(const std::vector<Violation>& violations, std::size_t limit = 3) {
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size() && i < limit; ++i) {
    if (i) out << "; ";
    out << violations[i].invariant << "@" << violations[i].position << " ("
        << violations[i].detail << ")";
  }
  if (violations.size() > limit) out << "; +" << violations.size() - limit << " more";
  return out.str();
}

std::string read_file_or_empty(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

OracleResult run_oracle(const OracleSpec& spec, const OracleContext& ctx) {
  OracleResult result;
  result.name = spec.check;

  if (spec.check == "invariants") {
    result.passed = ctx.violations.empty();
    result.detail = result.passed ? "no violations" : join_violations(ctx.violations);
    return result;
  }

  if (spec.check == "file_equals" || spec.check == "file_exists") {
    std::filesystem::path file = ctx.sandbox / spec.params.at("file").get<std::string>();
    bool exists = std::filesystem::exists(file);
    if (spec.check == "file_exists") {
      result.passed = exists;
      result.detail = file.string() + (exists ? " exists" : " missing");
      return result;
    }
    std::string want = spec.params.at("value").get<std::string>();
    std::string got = read_file_or_empty(file);
    result.passed = exists && got == want;
    result.detail = result.passed ? "content matches"
                                  : "expected " + json(want).dump() + ", got " + json(got).dump();
    return result;
  }

  if (spec.check == "work_items_once") {
    int count = spec.params.at("count").get<int>();
    std::map<std::string, int> done_lines;
    std::istringstream done(read_file_or_empty(ctx.sandbox / "done.log"));
    std::string line;
    int total_lines = 0;
    while (std::getline(done, line)) {
      ++done_lines[line];
      ++total_lines;
    }
    for (int k = 1; k <= count; ++k) {
      std::string key = std::to_string(k);
      std::string counter =
          read_file_or_empty(ctx.sandbox / "items" / ("item_" + key + ".count"));
      if (counter != "1") {
        result.passed = false;
        result.detail = "item " + key + " executed " + (counter.empty() ? "0" : counter) +
                        " times";
        return result;
      }
      if (done_lines[key] != 1) {
        result.passed = false;
        result.detail = "item " + key + " logged " + std::to_string(done_lines[key]) + " times";
        return result;
      }
    }
    result.passed = total_lines == count;
    result.detail = result.passed
                        ? "all " + std::to_string(count) + " items ran exactly once"
                        : "done.log has " + std::to_string(total_lines) + " lines";
    return result;
  }

  if (spec.check == "commit_count" || spec.check == "abort_count") {
    int n = 0;
    for (const Entry& entry : ctx.entries) {
      if (spec.check == "commit_count" && std::holds_alternative<CommitBody>(entry.payload)) ++n;
      if (spec.check == "abort_count" && std::holds_alternative<AbortBody>(entry.payload)) ++n;
    }
    bool ok = true;
    if (spec.params.contains("exact")) ok = n == spec.params["exact"].get<int>();
    if (spec.params.contains("min")) ok = ok && n >= spec.params["min"].get<int>();
    if (spec.params.contains("max")) ok = ok && n <= spec.params["max"].get<int>();
    result.passed = ok;
    result.detail = "count=" + std::to_string(n);
    return result;
  }

  if (spec.check == "stage_ratio") {
    double min_ratio = spec.params.value("min_ratio", 5.0);
    std::uint64_t lower = ctx.metrics.voting_ms + ctx.metrics.deciding_ms;
    result.passed = static_cast<double>(ctx.metrics.inferring_ms) >=
                    min_ratio * static_cast<double>(lower);
    result.detail = "inferring=" + std::to_string(ctx.metrics.inferring_ms) +
                    "ms voting+deciding=" + std::to_string(lower) + "ms";
    return result;
  }

  if (spec.check == "infin_bytes_bound") {
    const std::string& prompt = ctx.scenario.driver.system_prompt;
    std::uint64_t turns = spec.params.value("turns", 0ull);
    std::uint64_t total = 0;
    std::uint64_t max_delta_without_prompt = 0;
    int prompt_occurrences = 0;
    for (const Entry& entry : ctx.entries) {
      const auto* infin = std::get_if<InfInBody>(&entry.payload);
      if (!infin) continue;
      std::uint64_t bytes = serialize_payload(entry.payload).size();
      total += bytes;
      std::uint64_t prompt_bytes = 0;
      for (const Message& m : infin->delta) {
        if (m.role == Message::Role::System && m.content == prompt) {
          ++prompt_occurrences;
          prompt_bytes += prompt.size();
        }
      }
      max_delta_without_prompt = std::max(max_delta_without_prompt, bytes - prompt_bytes);
    }
    std::uint64_t bound = prompt.size() + turns * max_delta_without_prompt;
    result.passed = prompt_occurrences == 1 && total <= bound;
    result.detail = "prompt occurrences=" + std::to_string(prompt_occurrences) +
                    " total InfIn bytes=" + std::to_string(total) + " bound=" +
                    std::to_string(bound);
    return result;
  }

  if (spec.check == "no_escape") {
    for (const Entry& entry : ctx.entries) {
      const auto* r = std::get_if<ResultBody>(&entry.payload);
      if (r && r->output.find("escape succeeded") != std::string::npos) {
        result.passed = false;
        result.detail = "executor identity appended a privileged type at entry " +
                        std::to_string(entry.position);
        return result;
      }
    }
    result.passed = true;
    result.detail = "all escape probes were denied";
    return result;
  }

  if (spec.check == "intent_before") {
    std::string earlier = spec.params.at("earlier").get<std::string>();
    std::string later = spec.params.at("later").get<std::string>();
    bool after_recovery = spec.params.value("after_recovery", false);
    LogPosition fence = 0;
    if (after_recovery) {
      for (const Entry& entry : ctx.entries) {
        const auto* r = std::get_if<ResultBody>(&entry.payload);
        if (r && r->status == ResultStatus::Recovery) {
          fence = entry.position;
          break;
        }
      }
      if (fence == 0) {
        result.passed = false;
        result.detail = "no recovery fence on the bus";
        return result;
      }
    }
    std::optional<LogPosition> earlier_at, later_at;
    for (const Entry& entry : ctx.entries) {
      if (entry.position <= fence) continue;
      const auto* intent = std::get_if<IntentBody>(&entry.payload);
      if (!intent) continue;
      if (!earlier_at && intent->action.body.find(earlier) != std::string::npos) {
        earlier_at = entry.position;
      }
      if (!later_at && intent->action.body.find(later) != std::string::npos) {
        later_at = entry.position;
      }
    }
    result.passed = earlier_at && later_at && *earlier_at < *later_at;
    result.detail = "earlier at " + (earlier_at ? std::to_string(*earlier_at) : "-") +
                    ", later at " + (later_at ? std::to_string(*later_at) : "-");
    return result;
  }

  if (spec.check == "hotswap_phases") {
    std::string marker = spec.params.at("attack_marker").get<std::string>();
    struct PhaseStats {
      int attack_total{0}, attack_committed{0};
      int benign_total{0}, benign_committed{0};
    };
    std::map<int, PhaseStats> phases;
    int policy_entries = 0;
    std::map<LogPosition, int> intent_phase;
    std::map<LogPosition, bool> intent_attack;
    std::map<LogPosition, bool> committed;
    for (const Entry& entry : ctx.entries) {
      if (const auto* policy = std::get_if<PolicyBody>(&entry.payload)) {
        if (policy->kind == PolicyKind::Decider) ++policy_entries;
      } else if (const auto* intent = std::get_if<IntentBody>(&entry.payload)) {
        intent_phase[entry.position] = policy_entries;
        intent_attack[entry.position] = intent->action.body.find(marker) != std::string::npos;
      } else if (const auto* commit = std::get_if<CommitBody>(&entry.payload)) {
        committed[commit->intent_position] = true;
      }
    }
    for (const auto& [pos, phase] : intent_phase) {
      PhaseStats& stats = phases[phase];
      bool is_attack = intent_attack[pos];
      bool did_commit = committed.count(pos) > 0;
      if (is_attack) {
        ++stats.attack_total;
        if (did_commit) ++stats.attack_committed;
      } else {
        ++stats.benign_total;
        if (did_commit) ++stats.benign_committed;
      }
    }
    const PhaseStats p1 = phases[1], p2 = phases[2], p3 = phases[3];
    std::ostringstream detail;
    detail << "phase1 attacks " << p1.attack_committed << "/" << p1.attack_total << " benign "
           << p1.benign_committed << "/" << p1.benign_total << "; phase2 attacks "
           << p2.attack_committed << "/" << p2.attack_total << " benign " << p2.benign_committed
           << "/" << p2.benign_total << "; phase3 attacks " << p3.attack_committed << "/"
           << p3.attack_total << " benign " << p3.benign_committed << "/" << p3.benign_total;
    bool ok = p1.attack_total > 0 && p1.attack_committed == p1.attack_total &&  // no defense
              p1.benign_committed == p1.benign_total &&
              p2.attack_total > 0 && p2.attack_committed == 0 &&  // rule voter blocks
              p2.benign_committed < p2.benign_total &&            // false positives
              p3.attack_total > 0 && p3.attack_committed == 0 &&  // still blocked
              p3.benign_committed == p3.benign_total;             // utility restored
    result.passed = ok;
    result.detail = detail.str();
    return result;
  }

  result.passed = false;
  result.detail = "unknown oracle '" + spec.check + "'";
  return result;
}

}  // namespace

std::string hash_directory_tree(const std::filesystem::path& root) {
  std::uint64_t hash = 1469598103934665603ull;
  if (std::filesystem::exists(root)) {
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
      paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& path : paths) {
      hash = fnv1a(hash, std::filesystem::relative(path, root).string());
      if (std::filesystem::is_regular_file(path)) hash = fnv1a(hash, read_file_or_empty(path));
    }
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

bool ScenarioReport::all_oracles_passed() const {
  if (!completed) return false;
  for (const OracleResult& oracle : oracles) {
    if (!oracle.passed) return false;
  }
  return true;
}

json ScenarioReport::to_json() const {
  json oracle_docs = json::array();
  for (const OracleResult& oracle : oracles) {
    oracle_docs.push_back(
        json{{"check", oracle.name}, {"detail", oracle.detail}, {"passed", oracle.passed}});
  }
  json violation_docs = json::array();
  for (const Violation& violation : violations) {
    violation_docs.push_back(json{{"detail", violation.detail},
                                  {"invariant", violation.invariant},
                                  {"position", violation.position}});
  }
  return json{{"all_passed", all_oracles_passed()},
              {"completed", completed},
              {"entries", entries.size()},
              {"metrics", metrics.to_json()},
              {"name", name},
              {"oracles", std::move(oracle_docs)},
              {"sandbox_tree_hash", sandbox_tree_hash},
              {"seed", seed},
              {"violations", std::move(violation_docs)}};
}

std::string ScenarioReport::to_text() const {
  std::ostringstream out;
  out << "scenario " << name << " (seed " << seed << "): " << entries.size() << " entries, "
      << (completed ? "quiesced" : "STALLED") << "\n";
  out << "  stages: inferring=" << metrics.inferring_ms << "ms voting=" << metrics.voting_ms
      << "ms deciding=" << metrics.deciding_ms << "ms executing=" << metrics.executing_ms
      << "ms\n";
  out << "  payload bytes=" << metrics.total_payload_bytes() << " sandbox hash="
      << sandbox_tree_hash << "\n";
  for (const OracleResult& oracle : oracles) {
    out << "  [" << (oracle.passed ? "PASS" : "FAIL") << "] " << oracle.name << ": "
        << oracle.detail << "\n";
  }
  return out.str();
}

ScenarioReport run_scenario(const Scenario& scenario, std::uint64_t seed,
                            const RunOptions& options) {
  ScenarioReport report;
  report.name = scenario.name;
  report.seed = seed;

  auto clock = std::make_shared<VirtualClock>(1000);

  std::filesystem::path workdir = options.workdir;
  bool own_workdir = workdir.empty();
  if (own_workdir) {
    static std::atomic<std::uint64_t> counter{0};
    workdir = std::filesystem::temp_directory_path() /
              ("logact-run-" + std::to_string(::getpid()) + "-" +
               std::to_string(counter.fetch_add(1)));
  }
  std::filesystem::create_directories(workdir);
  std::filesystem::path sandbox = workdir / "sandbox";
  report.workdir = workdir;

  std::shared_ptr<AgentBus> bus;
  if (scenario.backend.kind == BusBackendSpec::Kind::Durable) {
    report.bus_file = scenario.backend.path.empty() ? workdir / "bus.agbus"
                                                    : scenario.backend.path;
    DurableBusOptions bus_options;
    bus_options.sync_mode = scenario.backend.sync_mode;
    bus_options.clock = clock;
    bus = DurableBus::open(report.bus_file, bus_options);
  } else {
    bus = std::make_shared<MemoryBus>(clock);
  }

  std::optional<SnapshotStore> store;
  if (options.snapshot_every > 0) store.emplace(workdir / "snapshots");
  const SnapshotStore* store_ptr = store ? &*store : nullptr;

  ClientIdentity admin = role_identity(Role::Admin, "admin");
  BusClient admin_client{bus.get(), admin};

  // The starting decider policy is part of the log.
  admin_client.append(Payload(make_policy_body("admin", policy_document(scenario.initial_policy))));

  std::vector<Slot> slots;
  auto add_voter_slot = [&](const AutoVoterSpec& spec, bool fresh_join) {
    Slot slot;
    slot.id = spec.descriptor.voter_id;
    slot.role = Role::Voter;
    ClientIdentity identity = role_identity(Role::Voter, spec.descriptor.voter_id);
    BusClient client{bus.get(), identity};
    VoterConfig config{spec.descriptor, spec.wait_for_types};
    json behavior = spec.behavior;
    slot.recover = [client, config, behavior, clock, store_ptr] {
      return std::unique_ptr<Component>(
          Voter::boot(client, config, make_voter_behavior(behavior, clock), store_ptr, false));
    };
    slot.component = Voter::boot(client, config, make_voter_behavior(behavior, clock), store_ptr,
                                 fresh_join);
    slots.push_back(std::move(slot));
  };

  if (scenario.start_driver) {
    Slot slot;
    slot.id = "driver";
    slot.role = Role::Driver;
    ClientIdentity identity = role_identity(Role::Driver, "driver");
    BusClient client{bus.get(), identity};
    DriverConfig config;
    config.driver_id = "driver";
    config.system_prompt = scenario.driver.system_prompt;
    auto adapter = make_adapter(scenario.driver.adapter, clock);
    slot.recover = [client, config, adapter, clock, store_ptr] {
      return std::unique_ptr<Component>(
          Driver::boot(client, config, adapter, store_ptr, /*elect=*/true, clock));
    };
    slot.component = std::make_unique<Driver>(client, config, adapter, 0, clock);
    slots.push_back(std::move(slot));
  }

  for (const AutoVoterSpec& spec : scenario.voters) add_voter_slot(spec, false);

  if (scenario.start_decider) {
    Slot slot;
    slot.id = "decider";
    slot.role = Role::Decider;
    ClientIdentity identity = role_identity(Role::Decider, "decider");
    BusClient client{bus.get(), identity};
    DeciderConfig config{"decider", scenario.initial_policy, scenario.decider_timeout_ms};
    slot.recover = [client, config, clock, store_ptr] {
      return std::unique_ptr<Component>(Decider::boot(client, config, store_ptr, clock));
    };
    slot.component = std::make_unique<Decider>(client, config, clock);
    slots.push_back(std::move(slot));
  }

  if (scenario.start_executor) {
    Slot slot;
    slot.id = "executor";
    slot.role = Role::Executor;
    ClientIdentity identity = role_identity(Role::Executor, "executor");
    BusClient client{bus.get(), identity};
    ExecutorConfig config{"executor", sandbox};
    slot.recover = [client, config, clock] {
      return std::unique_ptr<Component>(Executor::boot(client, config, clock));
    };
    slot.component = std::make_unique<Executor>(client, config, clock);
    slots.push_back(std::move(slot));
  }

  auto slot_by_id = [&](const std::string& id) -> Slot* {
    for (Slot& slot : slots) {
      if (slot.id == id) return &slot;
    }
    return nullptr;
  };

  std::vector<bool> workload_fired(scenario.workload.size(), false);
  std::vector<bool> fault_fired(scenario.faults.size(), false);

  // Trigger processing sits between component steps, so kills land at
  // append boundaries and everything stays deterministic.
  auto fire_triggers = [&]() -> bool {
    bool fired = false;
    std::uint64_t tail = bus->tail();
    std::uint64_t now = clock->now_ms();
    for (std::size_t i = 0; i < scenario.workload.size(); ++i) {
      if (workload_fired[i] || !scenario.workload[i].at.due(tail, now)) continue;
      workload_fired[i] = true;
      fired = true;
      const WorkloadItem& item = scenario.workload[i];
      if (item.mail) admin_client.append(Payload(MailBody{"external", *item.mail}));
      if (item.policy) admin_client.append(Payload(make_policy_body("admin", *item.policy)));
      if (item.start_voter) add_voter_slot(*item.start_voter, true);
      tail = bus->tail();
    }
    for (std::size_t i = 0; i < scenario.faults.size(); ++i) {
      if (fault_fired[i] || !scenario.faults[i].at.due(tail, now)) continue;
      fault_fired[i] = true;
      fired = true;
      const FaultSpec& fault = scenario.faults[i];
      Slot* slot = slot_by_id(fault.target);
      if (!slot) continue;
      switch (fault.kind) {
        case FaultKind::Kill: slot->component.reset(); break;
        case FaultKind::Pause: slot->paused = true; break;
        case FaultKind::Resume: slot->paused = false; break;
        case FaultKind::Restart:
          if (!slot->component && !slot->powered_down) slot->component = slot->recover();
          break;
      }
      tail = bus->tail();
    }
    return fired;
  };

  std::uint64_t rounds = 0;
  bool stalled = false;
  while (true) {
    if (++rounds > scenario.max_rounds) {
      stalled = true;
      break;
    }
    bool progressed = false;
    // Index loop: start_voter workload items may grow `slots`.
    for (std::size_t i = 0; i < slots.size(); ++i) {
      progressed |= fire_triggers();
      Slot& slot = slots[i];
      if (!slot.component || slot.paused) continue;
      StepStatus status = slot.component->step();
      if (status == StepStatus::Progress) {
        progressed = true;
        ++slot.progress_steps;
        if (store_ptr && options.snapshot_every > 0 &&
            slot.progress_steps % options.snapshot_every == 0) {
          store_ptr->put(slot.component->make_snapshot());
        }
      } else if (status == StepStatus::Fenced) {
        slot.component.reset();
        slot.powered_down = true;
      }
    }
    progressed |= fire_triggers();
    if (progressed) continue;

    // Quiescent: advance virtual time to the next deadline, if any.
    std::optional<std::uint64_t> deadline;
    auto consider = [&](std::optional<std::uint64_t> at) {
      if (at && (!deadline || *at < *deadline)) deadline = at;
    };
    for (const Slot& slot : slots) {
      if (slot.component && !slot.paused) consider(slot.component->next_deadline_ms());
    }
    for (std::size_t i = 0; i < scenario.workload.size(); ++i) {
      if (!workload_fired[i]) consider(scenario.workload[i].at.at_ms);
    }
    for (std::size_t i = 0; i < scenario.faults.size(); ++i) {
      if (!fault_fired[i]) consider(scenario.faults[i].at.at_ms);
    }
    if (deadline && *deadline > clock->now_ms()) {
      clock->advance_to(*deadline);
      continue;
    }
    break;
  }

  report.completed = !stalled;
  report.entries = admin_client.read(0, bus->tail());
  report.metrics = StageMetrics::from_entries(report.entries);
  report.violations =
      check_invariants(report.entries, InvariantOptions{scenario.initial_policy});
  for (const Slot& slot : slots) {
    if (slot.component) {
      report.component_states[slot.id] = slot.component->state_json();
    }
  }
  report.sandbox_tree_hash = hash_directory_tree(sandbox);

  OracleContext ctx{scenario, report.entries, report.metrics, sandbox, report.violations};
  for (const OracleSpec& spec : scenario.oracles) report.oracles.push_back(run_oracle(spec, ctx));
  if (stalled) {
    report.oracles.push_back({"scheduler", false, "scenario stalled before quiescence"});
  }

  bus->close();
  bus.reset();
  if (own_workdir && !options.keep_files) {
    std::error_code ec;
    std::filesystem::remove_all(workdir, ec);
    report.workdir.clear();
  }
  return report;
}

SweepReport crash_point_sweep(const Scenario& scenario, const std::string& component,
                              std::uint64_t seed, const RunOptions& options) {
  SweepReport report;
  report.component = component;

  ScenarioReport baseline = run_scenario(scenario, seed, options);
  if (!baseline.all_oracles_passed()) {
    report.failures.emplace_back(0, "baseline run failed: " + baseline.to_text());
    return report;
  }
  std::uint64_t n = baseline.entries.size();
  report.boundaries = n + 1;

  for (std::uint64_t i = 0; i <= n; ++i) {
    Scenario crashed = scenario;
    crashed.faults.push_back({Trigger{i, std::nullopt}, component, FaultKind::Kill});
    crashed.faults.push_back({Trigger{i, std::nullopt}, component, FaultKind::Restart});
    ScenarioReport run = run_scenario(crashed, seed, options);
    if (!run.all_oracles_passed()) {
      std::string detail;
      for (const OracleResult& oracle : run.oracles) {
        if (!oracle.passed) detail += oracle.name + ": " + oracle.detail + "; ";
      }
      report.failures.emplace_back(i, detail);
    }
  }
  return report;
}

}  // namespace logact::harness
