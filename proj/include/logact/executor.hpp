#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "logact/bus.hpp"
#include "logact/clock.hpp"
#include "logact/log_play.hpp"

namespace logact {

struct ExecutorConfig {
  std::string executor_id{"executor"};
  std::filesystem::path sandbox_root;
};

struct ActionResult {
  ResultStatus status{ResultStatus::Ok};
  std::string output;
};

// Runs the executing stage: plays commits, runs the committed action
// inside the sandbox jail, and appends the result. Duplicate commits
// for an already-executed intention are skipped. There is no election
// for executors; a rebooting executor appends a recovery Result which
// fences it conservatively: every commit before that entry is treated
// as possibly-executed and never re-run by this instance.
class Executor final : public Component {
 public:
  Executor(BusClient client, ExecutorConfig config, std::shared_ptr<Clock> clock = nullptr);

  // Reboot path: appends Result{status=recovery} and rebuilds the
  // executed set from all commits before that fence.
  static std::unique_ptr<Executor> boot(BusClient client, ExecutorConfig config,
                                        std::shared_ptr<Clock> clock = nullptr);

  StepStatus step() override;
  const std::string& component_id() const override { return config_.executor_id; }
  Snapshot make_snapshot() const override;
  void catch_up();

  const std::set<LogPosition>& executed() const { return executed_; }
  LogPosition played_up_to() const override { return played_up_to_; }
  nlohmann::json state_json() const override;

  // Runs one action under the jail; exposed for tests and builtins.
  ActionResult run_action(const ActionSpec& action);

  // Test hook: invoked between running an action and appending its
  // result, to exercise the executed-but-unreported crash window.
  std::function<void()> after_execute_hook;

 private:
  struct QueuedCommit {
    LogPosition commit_position{0};
    LogPosition intent_position{0};
  };

  void play(const Entry& entry);
  ActionResult run_shell(const ActionSpec& action, const std::filesystem::path& dir);
  ActionResult run_builtin(const ActionSpec& action, const std::filesystem::path& dir);
  std::filesystem::path jail_path(const std::filesystem::path& base,
                                  const std::string& relative) const;

  BusClient client_;
  ExecutorConfig config_;
  std::shared_ptr<Clock> clock_;

  std::map<LogPosition, IntentBody> intents_;
  std::vector<QueuedCommit> queue_;
  std::set<LogPosition> executed_;
  ElectionView elections_;
  LogPosition played_up_to_{0};
};

}  // namespace logact
