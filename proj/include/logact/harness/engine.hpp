#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "logact/harness/invariants.hpp"
#include "logact/harness/metrics.hpp"
#include "logact/harness/scenario.hpp"

namespace logact::harness {

struct OracleResult {
  std::string name;
  bool passed{false};
  std::string detail;
};

struct ScenarioReport {
  std::string name;
  std::uint64_t seed{0};
  bool completed{false};  // scheduler reached quiescence within bounds
  std::vector<Entry> entries;
  StageMetrics metrics;
  std::vector<OracleResult> oracles;
  std::vector<Violation> violations;
  std::map<std::string, nlohmann::json> component_states;
  std::string sandbox_tree_hash;
  std::filesystem::path workdir;   // retained only with keep_files
  std::filesystem::path bus_file;  // durable backends only

  bool all_oracles_passed() const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

struct RunOptions {
  std::filesystem::path workdir;  // defaults to a fresh temp directory
  bool keep_files{false};
  // When > 0, every component snapshots to a store after this many of
  // its own progress steps, so restarts exercise the snapshot path.
  std::uint64_t snapshot_every{0};
};

// Executes the scenario deterministically on a virtual clock: fixed
// component order, fault injection at append boundaries, oracles over
// the quiesced bus. Same scenario + seed => byte-identical bus.
ScenarioReport run_scenario(const Scenario& scenario, std::uint64_t seed,
                            const RunOptions& options = {});

struct SweepReport {
  std::string component;
  std::uint64_t boundaries{0};
  std::vector<std::pair<std::uint64_t, std::string>> failures;  // (kill index, detail)

  bool clean() const { return failures.empty(); }
};

// Re-runs the scenario killing `component` at every append boundary
// i = 0..n and recovering it, asserting the oracle + invariant suite
// after each recovery.
SweepReport crash_point_sweep(const Scenario& scenario, const std::string& component,
                              std::uint64_t seed, const RunOptions& options = {});

// FNV-1a over the sandbox tree (relative paths + contents).
std::string hash_directory_tree(const std::filesystem::path& root);

}  // namespace logact::harness
