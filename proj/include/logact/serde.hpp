#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "logact/acl.hpp"
#include "logact/types.hpp"

namespace logact {

// Canonical JSON encoding shared by every backend: object keys are sorted,
// no insignificant whitespace. serialize(parse(s)) == s for any s we emit,
// which is what makes logs byte-stable across replay and backends.

nlohmann::json message_to_json(const Message& message);
Message message_from_json(const nlohmann::json& doc);

nlohmann::json action_to_json(const ActionSpec& action);
ActionSpec action_from_json(const nlohmann::json& doc);

nlohmann::json payload_to_json(const Payload& payload);
Payload payload_from_json(const nlohmann::json& doc);

std::string serialize_payload(const Payload& payload);
Payload parse_payload(std::string_view text);

nlohmann::json entry_to_json(const Entry& entry);
Entry entry_from_json(const nlohmann::json& doc);

nlohmann::json permissions_to_json(const Permissions& permissions);
Permissions permissions_from_json(const nlohmann::json& doc);

nlohmann::json identity_to_json(const ClientIdentity& identity);
ClientIdentity identity_from_json(const nlohmann::json& doc);

}  // namespace logact
