#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "logact/errors.hpp"
#include "logact/harness/engine.hpp"
#include "logact/harness/random_scenarios.hpp"

namespace {

using namespace logact;
using namespace logact::harness;

Scenario builtin_scenario(const std::string& name) {
  if (name == "hello-task") return hello_task_scenario(1000);
  if (name == "hot-swap") return hot_swap_scenario();
  if (name == "executor-kill") return executor_kill_scenario();
  raise(Errc::UnknownTarget, "no builtin scenario named '" + name + "'");
}

Scenario load_scenario(const std::string& ref) {
  if (std::filesystem::exists(ref)) return Scenario::from_file(ref);
  return builtin_scenario(ref);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"harness: deterministic scenario and fault-injection engine"};
  app.require_subcommand(1);

  std::string scenario_ref, component, csv_file, report_file, out_file;
  std::uint64_t seed = 1;
  int count = 100;
  bool as_json = false, keep = false;

  auto* run = app.add_subcommand("run", "run one scenario");
  run->add_option("scenario", scenario_ref, "scenario file or builtin name")->required();
  run->add_option("--seed", seed, "deterministic seed");
  run->add_flag("--json", as_json, "emit the report as JSON");
  run->add_option("--csv", csv_file, "write per-stage metrics CSV");
  run->add_option("--report", report_file, "write the report to a file");
  run->add_flag("--keep", keep, "keep the run directory (bus file, sandbox)");

  auto* sweep = app.add_subcommand("sweep", "crash-point sweep over one component");
  sweep->add_option("scenario", scenario_ref, "scenario file or builtin name")->required();
  sweep->add_option("--component", component, "driver|decider|executor|<voter id>")->required();
  sweep->add_option("--seed", seed, "deterministic seed");

  auto* random = app.add_subcommand("random", "run seeded random protocol scenarios");
  random->add_option("--seed", seed, "first seed");
  random->add_option("--count", count, "number of scenarios");

  auto* sample = app.add_subcommand("sample", "print a builtin scenario as JSON");
  sample->add_option("name", scenario_ref, "hello-task|hot-swap|executor-kill")->required();
  sample->add_option("--out", out_file, "write to a file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      Scenario scenario = load_scenario(scenario_ref);
      RunOptions options;
      options.keep_files = keep;
      ScenarioReport report = run_scenario(scenario, seed, options);
      std::string text = as_json ? report.to_json().dump(2) + "\n" : report.to_text();
      std::cout << text;
      if (!report.workdir.empty()) std::cout << "run directory: " << report.workdir << "\n";
      if (!csv_file.empty()) std::ofstream(csv_file) << report.metrics.to_csv();
      if (!report_file.empty()) std::ofstream(report_file) << report.to_json().dump(2) << "\n";
      return report.all_oracles_passed() ? 0 : 1;
    }
    if (sweep->parsed()) {
      Scenario scenario = load_scenario(scenario_ref);
      SweepReport report = crash_point_sweep(scenario, component, seed);
      std::cout << "sweep over " << component << ": " << report.boundaries
                << " boundaries, " << report.failures.size() << " failures\n";
      for (const auto& [index, detail] : report.failures) {
        std::cout << "  kill@" << index << ": " << detail << "\n";
      }
      return report.clean() ? 0 : 1;
    }
    if (random->parsed()) {
      int failures = 0;
      for (int i = 0; i < count; ++i) {
        std::uint64_t s = seed + static_cast<std::uint64_t>(i);
        ScenarioReport report = run_scenario(random_scenario(s), s);
        if (!report.all_oracles_passed()) {
          ++failures;
          std::cout << report.to_text();
        }
      }
      std::cout << count << " random scenarios, " << failures << " failures\n";
      return failures == 0 ? 0 : 1;
    }
    if (sample->parsed()) {
      Scenario scenario = builtin_scenario(scenario_ref);
      std::string text = scenario.to_json().dump(2) + "\n";
      if (out_file.empty()) {
        std::cout << text;
      } else {
        std::ofstream(out_file) << text;
      }
      return 0;
    }
  } catch (const logact::Error& err) {
    std::cerr << "harness: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "harness: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
