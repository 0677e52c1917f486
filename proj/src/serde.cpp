#include "logact/serde.hpp"

#include "logact/errors.hpp"

namespace logact {
namespace {

using nlohmann::json;

Verdict verdict_from_name(std::string_view name) {
  if (name == "approve") return Verdict::Approve;
  if (name == "reject") return Verdict::Reject;
  raise(Errc::MalformedInput, "unknown verdict: " + std::string(name));
}

ResultStatus result_status_from_name(std::string_view name) {
  if (name == "ok") return ResultStatus::Ok;
  if (name == "error") return ResultStatus::Error;
  if (name == "recovery") return ResultStatus::Recovery;
  raise(Errc::MalformedInput, "unknown result status: " + std::string(name));
}

PolicyKind policy_kind_from_name(std::string_view name) {
  if (name == "decider") return PolicyKind::Decider;
  if (name == "voter") return PolicyKind::Voter;
  if (name == "driver_election") return PolicyKind::DriverElection;
  raise(Errc::MalformedInput, "unknown policy kind: " + std::string(name));
}

const json& field(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end()) raise(Errc::MalformedInput, std::string("missing field '") + key + "'");
  return *it;
}

json body_to_json(const InfInBody& body) {
  json delta = json::array();
  for (const auto& message : body.delta) delta.push_back(message_to_json(message));
  return json{{"delta", std::move(delta)}};
}

json body_to_json(const InfOutBody& body) {
  return json{{"intent_extracted", body.intent_extracted}, {"text", body.text}};
}

json body_to_json(const IntentBody& body) {
  return json{{"action", action_to_json(body.action)},
              {"driver_epoch", body.driver_epoch},
              {"turn", body.turn}};
}

json body_to_json(const VoteBody& body) {
  return json{{"intent_position", body.intent_position},
              {"rationale", body.rationale},
              {"verdict", verdict_name(body.verdict)},
              {"voter_id", body.voter_id},
              {"voter_type", body.voter_type}};
}

json body_to_json(const CommitBody& body) { return json{{"intent_position", body.intent_position}}; }

json body_to_json(const AbortBody& body) {
  return json{{"intent_position", body.intent_position}, {"reason", body.reason}};
}

json body_to_json(const ResultBody& body) {
  json doc{{"output", body.output}, {"status", result_status_name(body.status)}};
  if (body.intent_position) doc["intent_position"] = *body.intent_position;
  return doc;
}

json body_to_json(const MailBody& body) {
  return json{{"body", body.body}, {"sender", body.sender}};
}

json body_to_json(const PolicyBody& body) {
  return json{
      {"body", body.body}, {"issuer", body.issuer}, {"kind", policy_kind_name(body.kind)}};
}

Payload body_from_json(PayloadType type, const json& doc) {
  switch (type) {
    case PayloadType::InfIn: {
      InfInBody body;
      for (const auto& m : field(doc, "delta")) body.delta.push_back(message_from_json(m));
      return body;
    }
    case PayloadType::InfOut: {
      InfOutBody body;
      body.text = field(doc, "text").get<std::string>();
      body.intent_extracted = field(doc, "intent_extracted").get<bool>();
      return body;
    }
    case PayloadType::Intent: {
      IntentBody body;
      body.action = action_from_json(field(doc, "action"));
      body.driver_epoch = field(doc, "driver_epoch").get<std::uint64_t>();
      body.turn = field(doc, "turn").get<std::uint64_t>();
      return body;
    }
    case PayloadType::Vote: {
      VoteBody body;
      body.intent_position = field(doc, "intent_position").get<LogPosition>();
      body.voter_type = field(doc, "voter_type").get<std::string>();
      body.voter_id = field(doc, "voter_id").get<std::string>();
      body.verdict = verdict_from_name(field(doc, "verdict").get<std::string>());
      body.rationale = field(doc, "rationale").get<std::string>();
      return body;
    }
    case PayloadType::Commit: {
      CommitBody body;
      body.intent_position = field(doc, "intent_position").get<LogPosition>();
      return body;
    }
    case PayloadType::Abort: {
      AbortBody body;
      body.intent_position = field(doc, "intent_position").get<LogPosition>();
      body.reason = field(doc, "reason").get<std::string>();
      return body;
    }
    case PayloadType::Result: {
      ResultBody body;
      if (doc.contains("intent_position")) {
        body.intent_position = doc["intent_position"].get<LogPosition>();
      }
      body.status = result_status_from_name(field(doc, "status").get<std::string>());
      body.output = field(doc, "output").get<std::string>();
      return body;
    }
    case PayloadType::Mail: {
      MailBody body;
      body.sender = field(doc, "sender").get<std::string>();
      body.body = field(doc, "body").get<std::string>();
      return body;
    }
    case PayloadType::Policy: {
      PolicyBody body;
      body.kind = policy_kind_from_name(field(doc, "kind").get<std::string>());
      body.issuer = field(doc, "issuer").get<std::string>();
      body.body = field(doc, "body");
      return body;
    }
  }
  raise(Errc::MalformedInput, "bad payload type value");
}

}  // namespace

json message_to_json(const Message& message) {
  return json{{"content", message.content}, {"role", role_name(message.role)}};
}

Message message_from_json(const json& doc) {
  Message message;
  message.role = role_from_name(field(doc, "role").get<std::string>());
  message.content = field(doc, "content").get<std::string>();
  return message;
}

json action_to_json(const ActionSpec& action) {
  return json{{"body", action.body},
              {"kind", action.kind == ActionSpec::Kind::Shell ? "shell" : "builtin"},
              {"workdir", action.workdir}};
}

ActionSpec action_from_json(const json& doc) {
  ActionSpec action;
  std::string kind = field(doc, "kind").get<std::string>();
  if (kind == "shell") {
    action.kind = ActionSpec::Kind::Shell;
  } else if (kind == "builtin") {
    action.kind = ActionSpec::Kind::Builtin;
  } else {
    raise(Errc::MalformedInput, "unknown action kind: " + kind);
  }
  action.body = field(doc, "body").get<std::string>();
  action.workdir = field(doc, "workdir").get<std::string>();
  return action;
}

json payload_to_json(const Payload& payload) {
  json body = std::visit([](const auto& b) { return body_to_json(b); }, payload);
  return json{{"body", std::move(body)},
              {"type", payload_type_name(payload_type(payload))}};
}

Payload payload_from_json(const json& doc) {
  PayloadType type = payload_type_from_name(field(doc, "type").get<std::string>());
  return body_from_json(type, field(doc, "body"));
}

std::string serialize_payload(const Payload& payload) { return payload_to_json(payload).dump(); }

Payload parse_payload(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) raise(Errc::MalformedInput, "payload is not valid JSON");
  return payload_from_json(doc);
}

json entry_to_json(const Entry& entry) {
  return json{{"payload", payload_to_json(entry.payload)},
              {"position", entry.position},
              {"ts", entry.realtime_ts}};
}

Entry entry_from_json(const json& doc) {
  Entry entry;
  entry.position = field(doc, "position").get<LogPosition>();
  entry.realtime_ts = field(doc, "ts").get<std::uint64_t>();
  entry.payload = payload_from_json(field(doc, "payload"));
  return entry;
}

json permissions_to_json(const Permissions& permissions) {
  auto names = [](PayloadTypeSet set) {
    json out = json::array();
    for (PayloadType type : set.to_vector()) out.push_back(payload_type_name(type));
    return out;
  };
  return json{{"appendable", names(permissions.appendable)},
              {"pollable", names(permissions.pollable)},
              {"readable", names(permissions.readable)}};
}

Permissions permissions_from_json(const json& doc) {
  auto set_of = [&](const char* key) {
    PayloadTypeSet set;
    for (const auto& name : field(doc, key)) {
      set.insert(payload_type_from_name(name.get<std::string>()));
    }
    return set;
  };
  Permissions permissions;
  permissions.appendable = set_of("appendable");
  permissions.readable = set_of("readable");
  permissions.pollable = set_of("pollable");
  if (!permissions.valid()) {
    raise(Errc::MalformedInput, "pollable types must be a subset of readable types");
  }
  return permissions;
}

json identity_to_json(const ClientIdentity& identity) {
  return json{{"client_id", identity.client_id},
              {"permissions", permissions_to_json(identity.permissions)}};
}

ClientIdentity identity_from_json(const json& doc) {
  ClientIdentity identity;
  identity.client_id = field(doc, "client_id").get<std::string>();
  identity.permissions = permissions_from_json(field(doc, "permissions"));
  return identity;
}

}  // namespace logact
