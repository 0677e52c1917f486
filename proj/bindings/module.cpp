#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "logact/durable_bus.hpp"
#include "logact/errors.hpp"
#include "logact/harness/engine.hpp"
#include "logact/harness/random_scenarios.hpp"
#include "logact/inference.hpp"
#include "logact/kernel.hpp"
#include "logact/memory_bus.hpp"
#include "logact/policy.hpp"
#include "logact/serde.hpp"

namespace py = pybind11;

namespace {

using namespace logact;
using nlohmann::json;

json parse(const std::string& text, const char* what) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) raise(Errc::MalformedInput, std::string(what) + " is not valid JSON");
  return doc;
}

// Python-facing bus handle; payloads, identities, and entries cross the
// boundary as canonical JSON strings (logact.py wraps them as dicts).
class PyBus {
 public:
  static PyBus memory() {
    PyBus bus;
    bus.bus_ = std::make_shared<MemoryBus>();
    return bus;
  }

  static PyBus durable(const std::string& path, const std::string& sync, bool read_only) {
    DurableBusOptions options;
    options.sync_mode = sync == "batched" ? SyncMode::Batched : SyncMode::Always;
    options.read_only = read_only;
    PyBus bus;
    bus.bus_ = DurableBus::open(path, options);
    return bus;
  }

  std::uint64_t append(const std::string& identity_json, const std::string& payload_json) {
    ClientIdentity identity = identity_from_json(parse(identity_json, "identity"));
    Payload payload = payload_from_json(parse(payload_json, "payload"));
    py::gil_scoped_release release;
    return bus_->append(identity, payload);
  }

  std::vector<std::string> read(const std::string& identity_json, std::uint64_t start,
                                std::uint64_t end) const {
    ClientIdentity identity = identity_from_json(parse(identity_json, "identity"));
    std::vector<Entry> entries;
    {
      py::gil_scoped_release release;
      entries = bus_->read(identity, start, end);
    }
    std::vector<std::string> out;
    for (const Entry& entry : entries) out.push_back(entry_to_json(entry).dump());
    return out;
  }

  std::uint64_t tail() const { return bus_->tail(); }

  std::vector<std::string> poll(const std::string& identity_json, std::uint64_t start,
                                const std::vector<std::string>& types,
                                std::uint64_t timeout_ms) {
    ClientIdentity identity = identity_from_json(parse(identity_json, "identity"));
    PayloadTypeSet filter;
    for (const std::string& name : types) filter.insert(payload_type_from_name(name));
    std::vector<Entry> entries;
    {
      py::gil_scoped_release release;
      entries = bus_->poll(identity, start, filter, std::chrono::milliseconds(timeout_ms));
    }
    std::vector<std::string> out;
    for (const Entry& entry : entries) out.push_back(entry_to_json(entry).dump());
    return out;
  }

  void close() { bus_->close(); }

 private:
  std::shared_ptr<AgentBus> bus_;
};

class PyKernel {
 public:
  explicit PyKernel(const std::string& workdir, const std::string& runner_binary) {
    KernelConfig config;
    config.workdir = workdir.empty() ? "." : workdir;
    if (!runner_binary.empty()) config.runner_binary = runner_binary;
    kernel_ = std::make_unique<AgentKernel>(std::move(config));
  }

  std::string create_bus(const std::string& spec_json) {
    BusSpec spec = BusSpec::from_json(parse(spec_json, "bus spec"));
    BusInfo info;
    {
      py::gil_scoped_release release;
      info = kernel_->create_bus(spec);
    }
    return json{{"bus_id", info.bus_id},
                {"client_ids", info.client_ids},
                {"components", info.components},
                {"path", info.path.string()}}
        .dump();
  }

  std::uint64_t send_mail(const std::string& bus_id, const std::string& sender,
                          const std::string& body) {
    py::gil_scoped_release release;
    return kernel_->send_mail(bus_id, sender, body);
  }

  std::vector<std::string> list_buses() const { return kernel_->list_buses(); }

  void destroy_bus(const std::string& bus_id) {
    py::gil_scoped_release release;
    kernel_->destroy_bus(bus_id);
  }

 private:
  std::unique_ptr<AgentKernel> kernel_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "LogAct runtime: typed shared-log agents";

  static py::exception<Error> exc(m, "LogActError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& err) {
      exc(err.what());
    }
  });

  py::class_<PyBus>(m, "Bus")
      .def_static("memory", &PyBus::memory)
      .def_static("durable", &PyBus::durable, py::arg("path"), py::arg("sync") = "always",
                  py::arg("read_only") = false)
      .def("append", &PyBus::append)
      .def("read", &PyBus::read)
      .def("tail", &PyBus::tail)
      .def("poll", &PyBus::poll, py::arg("identity"), py::arg("start"), py::arg("types"),
           py::arg("timeout_ms") = 0)
      .def("close", &PyBus::close);

  py::class_<PyKernel>(m, "Kernel")
      .def(py::init<const std::string&, const std::string&>(), py::arg("workdir") = ".",
           py::arg("runner_binary") = "")
      .def("create_bus", &PyKernel::create_bus)
      .def("send_mail", &PyKernel::send_mail)
      .def("list_buses", &PyKernel::list_buses)
      .def("destroy_bus", &PyKernel::destroy_bus);

  m.def("role_identity", [](const std::string& role, const std::string& client_id) {
    return identity_to_json(role_identity(role_from_name(role), client_id)).dump();
  });

  m.def("evaluate_policy", [](const std::string& policy_json, const std::string& votes_json) {
    ParsedPolicy parsed = parse_policy(parse(policy_json, "policy"));
    if (!std::holds_alternative<DeciderPolicy>(parsed)) {
      raise(Errc::MalformedPolicy, "expected a decider policy");
    }
    std::vector<VoteBody> votes;
    for (const json& v : parse(votes_json, "votes")) {
      votes.push_back(std::get<VoteBody>(payload_from_json(v)));
    }
    switch (evaluate(std::get<DeciderPolicy>(parsed), votes)) {
      case Decision::Commit: return "commit";
      case Decision::Abort: return "abort";
      default: return "undecided";
    }
  });

  m.def("parse_policy_kind", [](const std::string& doc_json) {
    return std::string(
        policy_kind_name(policy_kind_of(parse_policy(parse(doc_json, "policy")))));
  });

  m.def("extract_intent", [](const std::string& text) {
    ExtractResult result = extract_intent(text);
    json doc{{"warnings", result.warnings}};
    if (result.action) doc["action"] = action_to_json(*result.action);
    return doc.dump();
  });

  m.def("delta_of", [](const std::string& prev_json, const std::string& next_json) {
    auto messages_of = [](const json& doc) {
      Conversation conversation;
      for (const json& m : doc) conversation.messages.push_back(message_from_json(m));
      return conversation;
    };
    std::vector<Message> delta = delta_of(messages_of(parse(prev_json, "prev")),
                                          messages_of(parse(next_json, "next")));
    json out = json::array();
    for (const Message& m : delta) out.push_back(message_to_json(m));
    return out.dump();
  });

  m.def(
      "run_scenario",
      [](const std::string& scenario_json, std::uint64_t seed, bool keep) {
        harness::Scenario scenario =
            harness::Scenario::from_json(parse(scenario_json, "scenario"));
        harness::RunOptions options;
        options.keep_files = keep;
        harness::ScenarioReport report;
        {
          py::gil_scoped_release release;
          report = harness::run_scenario(scenario, seed, options);
        }
        return report.to_json().dump();
      },
      py::arg("scenario"), py::arg("seed") = 1, py::arg("keep") = false);

  m.def("builtin_scenario", [](const std::string& name) {
    if (name == "hello-task") return harness::hello_task_scenario(1000).to_json().dump();
    if (name == "hot-swap") return harness::hot_swap_scenario().to_json().dump();
    if (name == "executor-kill") return harness::executor_kill_scenario().to_json().dump();
    raise(Errc::UnknownTarget, "no builtin scenario named '" + name + "'");
  });

  m.def("random_scenario",
        [](std::uint64_t seed) { return harness::random_scenario(seed).to_json().dump(); });

  m.def(
      "crash_sweep",
      [](const std::string& scenario_json, const std::string& component, std::uint64_t seed) {
        harness::Scenario scenario =
            harness::Scenario::from_json(parse(scenario_json, "scenario"));
        harness::SweepReport report;
        {
          py::gil_scoped_release release;
          report = harness::crash_point_sweep(scenario, component, seed);
        }
        json failures = json::array();
        for (const auto& [index, detail] : report.failures) {
          failures.push_back(json{{"detail", detail}, {"kill_index", index}});
        }
        return json{{"boundaries", report.boundaries},
                    {"component", report.component},
                    {"failures", std::move(failures)}}
            .dump();
      },
      py::arg("scenario"), py::arg("component"), py::arg("seed") = 1);
}
