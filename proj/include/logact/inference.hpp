#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "logact/clock.hpp"
#include "logact/types.hpp"

namespace logact {

struct Conversation {
  std::vector<Message> messages;

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

// Returns next minus prev; prev must be a prefix of next (NotAPrefix).
std::vector<Message> delta_of(const Conversation& prev, const Conversation& next);

// Pluggable inference layer. Adapters are immutable after construction.
class InferenceAdapter {
 public:
  virtual ~InferenceAdapter() = default;
  virtual std::string infer(const Conversation& conversation) = 0;
};

// Replies with the content of the latest user/tool message.
class EchoAdapter final : public InferenceAdapter {
 public:
  std::string infer(const Conversation& conversation) override;
};

// One deterministic response rule: first match against the latest
// user/tool message wins; the configured default covers the rest.
struct ScriptedRule {
  std::string pattern;
  bool is_regex{false};  // substring match otherwise
  std::string response;
};

class ScriptedAdapter final : public InferenceAdapter {
 public:
  ScriptedAdapter(std::vector<ScriptedRule> rules, std::string default_response,
                  std::shared_ptr<Clock> clock = nullptr, std::uint64_t delay_ms = 0);

  static std::shared_ptr<ScriptedAdapter> from_json(const nlohmann::json& doc,
                                                    std::shared_ptr<Clock> clock = nullptr);

  std::string infer(const Conversation& conversation) override;

 private:
  std::vector<ScriptedRule> rules_;
  std::string default_response_;
  std::shared_ptr<Clock> clock_;
  std::uint64_t delay_ms_;
};

// Chat-completions style HTTP client; stateless, full history per call.
struct HttpAdapterConfig {
  std::string endpoint;  // e.g. http://localhost:8080/v1/chat/completions
  std::string model;
  std::string auth_token_env;  // name of the env var holding a bearer token
  std::uint64_t timeout_ms{30000};
};

class HttpChatAdapter final : public InferenceAdapter {
 public:
  explicit HttpChatAdapter(HttpAdapterConfig config);
  std::string infer(const Conversation& conversation) override;

 private:
  HttpAdapterConfig config_;
};

// Result of scanning model output for a fenced action block.
struct ExtractResult {
  std::optional<ActionSpec> action;
  std::vector<std::string> warnings;
};

// Parses the first ```action fenced block; anything after the first is
// ignored with a warning, an unparseable block yields no action plus a
// diagnostic. Grammar in docs/formats.md.
ExtractResult extract_intent(std::string_view text);

// Renders an action back into the fenced block form (used by scripted
// rule authors and tests).
std::string action_block(const ActionSpec& action);

// Adapter from a config document: {"kind":"echo"}, {"kind":"scripted",
// "rules":[...], "default":...}, or {"kind":"http", "endpoint":...}.
std::shared_ptr<InferenceAdapter> make_adapter(const nlohmann::json& doc,
                                               std::shared_ptr<Clock> clock = nullptr);

}  // namespace logact
