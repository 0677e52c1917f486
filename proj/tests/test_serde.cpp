#include "doctest.h"
#include "logact/serde.hpp"

#include <random>

#include "logact/errors.hpp"

using namespace logact;

namespace {

Payload sample_payload(int which, std::mt19937_64& rng) {
  auto text = [&](const char* prefix) {
    return std::string(prefix) + std::to_string(rng() % 100000);
  };
  switch (which % kPayloadTypeCount) {
    case 0: {
      InfInBody body;
      
      return body;
    }
    case 1: return InfOutBody{text("output "), (rng() & 1) != 0};
    case 2:
      return IntentBody{{ActionSpec::Kind::Shell, text("echo "), "sub/dir"}, rng() % 5, rng() % 9};
    case 3: return VoteBody{rng() % 50, "rule", "rule-1", Verdict::Reject, text("because ")};
    case 4: return CommitBody{rng() % 50};
    case 5: return AbortBody{rng() % 50, text("reason ")};
    case 6: {
      ResultBody body;
      if (rng() & 1) body.intent_position = rng() % 50;
      body.status = (rng() & 2) ? ResultStatus::Ok : ResultStatus::Error;
      body.output = text("out ");
      return body;
    }
    case 7: return MailBody{"user", text("mail body ")};
    default:
      return PolicyBody{PolicyKind::Decider, "admin",
                        nlohmann::json{{"expr", "on_by_default"}, {"kind", "decider"}, {"v", 1}}};
  }
}

}  // namespace

TEST_CASE("payload names are the nine stable strings") {
  const char* expected[] = {"InfIn", "InfOut", "Intent", "Vote",  "Commit",
                            "Abort", "Result", "Mail",   "Policy"};
  for (int i = 0; i < kPayloadTypeCount; ++i) {
    auto type = static_cast<PayloadType>(i);
    CHECK(payload_type_name(type) == expected[i]);
    CHECK(payload_type_from_name(expected[i]) == type);
  }
  CHECK_THROWS_AS(payload_type_from_name("NotAType"), Error);
}

TEST_CASE("payload serialization is a byte-stable round trip") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 400; ++i) {
    Payload payload = sample_payload(i, rng);
    std::string bytes = serialize_payload(payload);
    Payload back = parse_payload(bytes);
    CHECK(back == payload);
    CHECK(serialize_payload(back) == bytes);
  }
}

TEST_CASE("entry json carries position, timestamp, and payload") {
  Entry entry{42, 1234567, MailBody{"ops", "hello"}};
  Entry back = entry_from_json(entry_to_json(entry));
  CHECK(back == entry);
}

TEST_CASE("recovery results serialize without an intent position") {
  ResultBody recovery{std::nullopt, ResultStatus::Recovery, "executor rebooted"};
  std::string bytes = serialize_payload(Payload(recovery));
  CHECK(bytes.find("intent_position") == std::string::npos);
  auto back = std::get<ResultBody>(parse_payload(bytes));
  CHECK_FALSE(back.intent_position.has_value());
  CHECK(back.status == ResultStatus::Recovery);
}

TEST_CASE("identity json rejects pollable types that are not readable") {
  nlohmann::json doc{{"client_id", "x"},
                     {"permissions",
                      {{"appendable", nlohmann::json::array()},
                       {"readable", {"Mail"}},
                       {"pollable", {"Vote"}}}}};
  CHECK_THROWS_AS(identity_from_json(doc), Error);
}

TEST_CASE("identity json round trip") {
  ClientIdentity identity{"voter-1",
                          Permissions{{PayloadType::Vote},
                                      {PayloadType::Intent, PayloadType::Policy},
                                      {PayloadType::Intent}}};
  ClientIdentity back = identity_from_json(identity_to_json(identity));
  CHECK(back == identity);
}

TEST_CASE("malformed payload text raises MalformedInput") {
  CHECK_THROWS_AS(parse_payload("{not json"), Error);
  CHECK_THROWS_AS(parse_payload(R"({"type":"Vote","body":{}})"), Error);
}
