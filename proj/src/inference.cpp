#include "logact/inference.hpp"

#include <cstdlib>
#include <regex>

#include "httplib.h"
#include "logact/errors.hpp"
#include "logact/serde.hpp"

namespace logact {
namespace {

const Message* latest_input_message(const Conversation& conversation) {
  for (auto it = conversation.messages.rbegin(); it != conversation.messages.rend(); ++it) {
    if (it->role == Message::Role::User || it->role == Message::Role::Tool) return &*it;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::vector<Message> delta_of(const Conversation& prev, const Conversation& next) {
  if (prev.messages.size() > next.messages.size()) {
    raise(Errc::NotAPrefix, "previous conversation is longer than the next one");
  }
  for (std::size_t i = 0; i < prev.messages.size(); ++i) {
    if (!(prev.messages[i] == next.messages[i])) {
      raise(Errc::NotAPrefix, "conversations diverge at message " + std::to_string(i));
    }
  }
  return {next.messages.begin() + static_cast<std::ptrdiff_t>(prev.messages.size()),
          next.messages.end()};
}

std::string EchoAdapter::infer(const Conversation& conversation) {
  if (conversation.messages.empty()) {
    raise(Errc::MalformedInput, "cannot infer over an empty conversation");
  }
  const Message* input = latest_input_message(conversation);
  return input ? input->content : conversation.messages.back().content;
}

ScriptedAdapter::ScriptedAdapter(std::vector<ScriptedRule> rules, std::string default_response,
                                 std::shared_ptr<Clock> clock, std::uint64_t delay_ms)
    : rules_(std::move(rules)),
      default_response_(std::move(default_response)),
      clock_(std::move(clock)),
      delay_ms_(delay_ms) {}

std::shared_ptr<ScriptedAdapter> ScriptedAdapter::from_json(const nlohmann::json& doc,
                                                            std::shared_ptr<Clock> clock) {
  if (!doc.is_object() || !doc.contains("default")) {
    raise(Errc::MalformedInput, "scripted rules document needs a 'default' response");
  }
  std::vector<ScriptedRule> rules;
  if (doc.contains("rules")) {
    for (const auto& r : doc["rules"]) {
      ScriptedRule rule;
      rule.pattern = r.at("match").get<std::string>();
      rule.is_regex = r.value("regex", false);
      rule.response = r.at("respond").get<std::string>();
      rules.push_back(std::move(rule));
    }
  }
  return std::make_shared<ScriptedAdapter>(std::move(rules), doc["default"].get<std::string>(),
                                           std::move(clock), doc.value("delay_ms", 0ull));
}

std::string ScriptedAdapter::infer(const Conversation& conversation) {
  if (conversation.messages.empty()) {
    raise(Errc::MalformedInput, "cannot infer over an empty conversation");
  }
  if (delay_ms_ > 0 && clock_) clock_->sleep_ms(delay_ms_);
  const Message* input = latest_input_message(conversation);
  std::string subject = input ? input->content : std::string();
  for (const ScriptedRule& rule : rules_) {
    bool hit = rule.is_regex ? std::regex_search(subject, std::regex(rule.pattern))
                             : subject.find(rule.pattern) != std::string::npos;
    if (hit) return rule.response;
  }
  return default_response_;
}

HttpChatAdapter::HttpChatAdapter(HttpAdapterConfig config) : config_(std::move(config)) {}

std::string HttpChatAdapter::infer(const Conversation& conversation) {
  if (conversation.messages.empty()) {
    raise(Errc::MalformedInput, "cannot infer over an empty conversation");
  }
  // Split endpoint into host part and path.
  std::string url = config_.endpoint;
  std::size_t scheme = url.find("://");
  std::size_t path_at = scheme == std::string::npos ? url.find('/')
                                                    : url.find('/', scheme + 3);
  std::string base = path_at == std::string::npos ? url : url.substr(0, path_at);
  std::string path = path_at == std::string::npos ? "/" : url.substr(path_at);

  httplib::Client client(base);
  client.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
  client.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));

  httplib::Headers headers;
  if (!config_.auth_token_env.empty()) {
    if (const char* token = std::getenv(config_.auth_token_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }

  nlohmann::json messages = nlohmann::json::array();
  for (const Message& m : conversation.messages) messages.push_back(message_to_json(m));
  nlohmann::json request{{"messages", std::move(messages)}, {"model", config_.model}};

  auto res = client.Post(path, headers, request.dump(), "application/json");
  if (!res || res->status != 200) {
    raise(Errc::AdapterUnavailable,
          "inference endpoint " + config_.endpoint +
              (res ? " returned status " + std::to_string(res->status) : " is unreachable"));
  }
  nlohmann::json doc = nlohmann::json::parse(res->body, nullptr, false);
  if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty()) {
    raise(Errc::AdapterUnavailable, "inference endpoint returned an unexpected body");
  }
  return doc["choices"][0].at("message").at("content").get<std::string>();
}

ExtractResult extract_intent(std::string_view text) {
  ExtractResult result;
  std::string_view rest = text;
  bool first = true;
  constexpr std::string_view kOpen = "```action";

  while (true) {
    std::size_t open = rest.find(kOpen);
    if (open == std::string_view::npos) break;
    std::size_t body_start = rest.find('\n', open);
    if (body_start == std::string_view::npos) break;
    ++body_start;
    std::size_t close = rest.find("```", body_start);
    if (close == std::string_view::npos) {
      result.warnings.push_back("unterminated action block ignored");
      break;
    }
    std::string_view block = rest.substr(body_start, close - body_start);
    rest = rest.substr(close + 3);

    if (!first) {
      result.warnings.push_back("extra action block ignored; first block wins");
      continue;
    }
    first = false;

    // Block fields: kind, workdir (optional), body (inline or the rest).
    ActionSpec action;
    bool have_kind = false, have_body = false;
    std::size_t line_start = 0;
    while (line_start < block.size()) {
      std::size_t line_end = block.find('\n', line_start);
      if (line_end == std::string_view::npos) line_end = block.size();
      std::string_view line = block.substr(line_start, line_end - line_start);
      line_start = line_end + 1;

      if (line.rfind("kind:", 0) == 0) {
        std::string kind = trim(line.substr(5));
        if (kind == "shell") {
          action.kind = ActionSpec::Kind::Shell;
        } else if (kind == "builtin") {
          action.kind = ActionSpec::Kind::Builtin;
        } else {
          result.warnings.push_back("action block has unknown kind '" + kind + "'");
          have_kind = false;
          break;
        }
        have_kind = true;
      } else if (line.rfind("workdir:", 0) == 0) {
        action.workdir = trim(line.substr(8));
      } else if (line.rfind("body:", 0) == 0) {
        std::string inline_body = trim(line.substr(5));
        if (!inline_body.empty()) {
          action.body = inline_body;
        } else {
          // Multi-line body: everything after this marker line.
          std::string body(block.substr(std::min(line_start, block.size())));
          while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
          action.body = body;
          line_start = block.size();
        }
        have_body = true;
      }
    }

    if (!have_kind || !have_body || action.body.empty()) {
      if (result.warnings.empty()) {
        result.warnings.push_back("malformed action block ignored (needs kind and body)");
      }
      continue;
    }
    if (action.workdir.empty()) action.workdir = ".";
    result.action = std::move(action);
  }
  return result;
}

std::shared_ptr<InferenceAdapter> make_adapter(const nlohmann::json& doc,
                                               std::shared_ptr<Clock> clock) {
  std::string kind = doc.value("kind", "echo");
  if (kind == "echo") return std::make_shared<EchoAdapter>();
  if (kind == "scripted") return ScriptedAdapter::from_json(doc, std::move(clock));
  if (kind == "http") {
    HttpAdapterConfig config;
    config.endpoint = doc.at("endpoint").get<std::string>();
    config.model = doc.value("model", "default");
    config.auth_token_env = doc.value("auth_token_env", "");
    config.timeout_ms = doc.value("timeout_ms", 30000ull);
    return std::make_shared<HttpChatAdapter>(std::move(config));
  }
  raise(Errc::MalformedInput, "unknown adapter kind: " + kind);
}

std::string action_block(const ActionSpec& action) {
  std::string out = "```action\nkind: ";
  out += action.kind == ActionSpec::Kind::Shell ? "shell" : "builtin";
  out += "\nworkdir: ";
  out += action.workdir.empty() ? "." : action.workdir;
  out += "\nbody:\n";
  out += action.body;
  out += "\n```";
  return out;
}

}  // namespace logact
