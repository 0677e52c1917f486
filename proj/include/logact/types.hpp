#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace logact {

using LogPosition = std::uint64_t;

// The nine entry kinds carried on an AgentBus. Serialized names are stable.
enum class PayloadType : std::uint8_t {
  InfIn = 0,
  InfOut,
  Intent,
  Vote,
  Commit,
  Abort,
  Result,
  Mail,
  Policy,
};

inline constexpr int kPayloadTypeCount = 9;

std::string_view payload_type_name(PayloadType type);
PayloadType payload_type_from_name(std::string_view name);

// One conversation message as exchanged with the inference layer.
struct Message {
  enum class Role : std::uint8_t { System, User, Assistant, Tool };
  Role role{Role::User};
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

std::string_view role_name(Message::Role role);
Message::Role role_from_name(std::string_view name);

// A concrete action proposed by the driver and run by the executor.
struct ActionSpec {
  enum class Kind : std::uint8_t { Shell, Builtin };
  Kind kind{Kind::Shell};
  std::string body;        // command line, or builtin name + arguments
  std::string workdir{"."};  // relative to the executor sandbox root

  friend bool operator==(const ActionSpec&, const ActionSpec&) = default;
};

enum class Verdict : std::uint8_t { Approve, Reject };

enum class ResultStatus : std::uint8_t { Ok, Error, Recovery };

enum class PolicyKind : std::uint8_t { Decider, Voter, DriverElection };

std::string_view verdict_name(Verdict verdict);
std::string_view result_status_name(ResultStatus status);
std::string_view policy_kind_name(PolicyKind kind);

// Payload bodies, in PayloadType order so variant index == enum value.

struct InfInBody {
  std::vector<Message> delta;  // messages added since the previous InfIn

  friend bool operator==(const InfInBody&, const InfInBody&) = default;
};

struct InfOutBody {
  std::string text;  // raw model output
  bool intent_extracted{false};

  friend bool operator==(const InfOutBody&, const InfOutBody&) = default;
};

struct IntentBody {
  ActionSpec action;
  std::uint64_t driver_epoch{0};
  std::uint64_t turn{0};

  friend bool operator==(const IntentBody&, const IntentBody&) = default;
};

struct VoteBody {
  LogPosition intent_position{0};
  std::string voter_type;
  std::string voter_id;
  Verdict verdict{Verdict::Reject};
  std::string rationale;

  friend bool operator==(const VoteBody&, const VoteBody&) = default;
};

struct CommitBody {
  LogPosition intent_position{0};

  friend bool operator==(const CommitBody&, const CommitBody&) = default;
};

struct AbortBody {
  LogPosition intent_position{0};
  std::string reason;

  friend bool operator==(const AbortBody&, const AbortBody&) = default;
};

struct ResultBody {
  std::optional<LogPosition> intent_position;  // absent for the executor reboot fence
  ResultStatus status{ResultStatus::Ok};
  std::string output;

  friend bool operator==(const ResultBody&, const ResultBody&) = default;
};

struct MailBody {
  std::string sender;
  std::string body;

  friend bool operator==(const MailBody&, const MailBody&) = default;
};

struct PolicyBody {
  PolicyKind kind{PolicyKind::Decider};
  std::string issuer;
  nlohmann::json body;  // structured policy document, see docs/formats.md

  friend bool operator==(const PolicyBody&, const PolicyBody&) = default;
};

using Payload = std::variant<InfInBody, InfOutBody, IntentBody, VoteBody, CommitBody, AbortBody,
                             ResultBody, MailBody, PolicyBody>;

inline PayloadType payload_type(const Payload& payload) {
  return static_cast<PayloadType>(payload.index());
}

struct Entry {
  LogPosition position{0};
  std::uint64_t realtime_ts{0};  // milliseconds since epoch, backend clock
  Payload payload;

  friend bool operator==(const Entry&, const Entry&) = default;
};

}  // namespace logact
