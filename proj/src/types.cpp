#include "logact/types.hpp"

#include "logact/acl.hpp"
#include "logact/errors.hpp"

namespace logact {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::PermissionDenied: return "PermissionDenied";
    case Errc::InvalidRange: return "InvalidRange";
    case Errc::BusClosed: return "BusClosed";
    case Errc::CorruptLog: return "CorruptLog";
    case Errc::CorruptSnapshot: return "CorruptSnapshot";
    case Errc::IoFailure: return "IoFailure";
    case Errc::MalformedPolicy: return "MalformedPolicy";
    case Errc::MalformedInput: return "MalformedInput";
    case Errc::MalformedActionBlock: return "MalformedActionBlock";
    case Errc::NotAPrefix: return "NotAPrefix";
    case Errc::Fenced: return "Fenced";
    case Errc::AdapterUnavailable: return "AdapterUnavailable";
    case Errc::InferenceFailure: return "InferenceFailure";
    case Errc::SandboxViolation: return "SandboxViolation";
    case Errc::UnknownBus: return "UnknownBus";
    case Errc::DuplicateBusId: return "DuplicateBusId";
    case Errc::SpawnFailure: return "SpawnFailure";
    case Errc::UnknownTarget: return "UnknownTarget";
    case Errc::OracleFailure: return "OracleFailure";
  }
  return "UnknownError";
}

std::string_view payload_type_name(PayloadType type) {
  switch (type) {
    case PayloadType::InfIn: return "InfIn";
    case PayloadType::InfOut: return "InfOut";
    case PayloadType::Intent: return "Intent";
    case PayloadType::Vote: return "Vote";
    case PayloadType::Commit: return "Commit";
    case PayloadType::Abort: return "Abort";
    case PayloadType::Result: return "Result";
    case PayloadType::Mail: return "Mail";
    case PayloadType::Policy: return "Policy";
  }
  raise(Errc::MalformedInput, "bad payload type value");
}

PayloadType payload_type_from_name(std::string_view name) {
  for (int i = 0; i < kPayloadTypeCount; ++i) {
    auto type = static_cast<PayloadType>(i);
    if (payload_type_name(type) == name) return type;
  }
  raise(Errc::MalformedInput, "unknown payload type: " + std::string(name));
}

std::string_view role_name(Message::Role role) {
  switch (role) {
    case Message::Role::System: return "system";
    case Message::Role::User: return "user";
    case Message::Role::Assistant: return "assistant";
    case Message::Role::Tool: return "tool";
  }
  raise(Errc::MalformedInput, "bad message role value");
}

Message::Role role_from_name(std::string_view name) {
  if (name == "system") return Message::Role::System;
  if (name == "user") return Message::Role::User;
  if (name == "assistant") return Message::Role::Assistant;
  if (name == "tool") return Message::Role::Tool;
  raise(Errc::MalformedInput, "unknown message role: " + std::string(name));
}

std::string_view verdict_name(Verdict verdict) {
  return verdict == Verdict::Approve ? "approve" : "reject";
}

std::string_view result_status_name(ResultStatus status) {
  switch (status) {
    case ResultStatus::Ok: return "ok";
    case ResultStatus::Error: return "error";
    case ResultStatus::Recovery: return "recovery";
  }
  raise(Errc::MalformedInput, "bad result status value");
}

std::string_view policy_kind_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Decider: return "decider";
    case PolicyKind::Voter: return "voter";
    case PolicyKind::DriverElection: return "driver_election";
  }
  raise(Errc::MalformedInput, "bad policy kind value");
}

std::vector<PayloadType> PayloadTypeSet::to_vector() const {
  std::vector<PayloadType> out;
  for (int i = 0; i < kPayloadTypeCount; ++i) {
    auto type = static_cast<PayloadType>(i);
    if (contains(type)) out.push_back(type);
  }
  return out;
}

}  // namespace logact
