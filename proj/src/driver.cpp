#include "logact/driver.hpp"

#include <algorithm>

#include "logact/errors.hpp"
#include "logact/serde.hpp"

namespace logact {

Driver::Driver(BusClient client, DriverConfig config, std::shared_ptr<InferenceAdapter> adapter,
               std::uint64_t epoch, std::shared_ptr<Clock> clock)
    : client_(std::move(client)),
      config_(std::move(config)),
      adapter_(std::move(adapter)),
      clock_(clock ? std::move(clock) : SystemClock::instance()),
      epoch_(epoch) {}

std::unique_ptr<Driver> Driver::boot(BusClient client, DriverConfig config,
                                     std::shared_ptr<InferenceAdapter> adapter,
                                     const SnapshotStore* store, bool elect,
                                     std::shared_ptr<Clock> clock) {
  std::uint64_t epoch = 0;
  if (elect) epoch = driver_elect(client, config.driver_id).epoch;
  auto driver =
      std::make_unique<Driver>(client, std::move(config), std::move(adapter), epoch, clock);
  if (store) {
    std::optional<Snapshot> snapshot;
    try {
      snapshot = store->get_latest(driver->component_id());
    } catch (const Error&) {
      snapshot.reset();  // corrupt snapshot: fall back to full replay
    }
    if (snapshot) driver->restore(*snapshot);
  }
  driver->catch_up();
  return driver;
}

void Driver::play(const Entry& entry) {
  LogPosition pos = entry.position;
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, MailBody>) {
          buffer_.push_back({Message{Message::Role::User, body.body}, pos});
        } else if constexpr (std::is_same_v<T, InfInBody>) {
          for (const Message& m : body.delta) conversation_.messages.push_back(m);
          while (!buffer_.empty() && buffer_.front().source < pos) buffer_.pop_front();
          ++infin_count_;
        } else if constexpr (std::is_same_v<T, InfOutBody>) {
          conversation_.messages.push_back(Message{Message::Role::Assistant, body.text});
          ++infout_count_;
          if (body.intent_extracted) {
            pending_extraction_ = extract_intent(body.text).action;
          }
        } else if constexpr (std::is_same_v<T, IntentBody>) {
          if (elections_.intent_valid(pos, body)) {
            pending_extraction_.reset();
            pending_intent_ = pos;
          }
        } else if constexpr (std::is_same_v<T, AbortBody>) {
          if (pending_intent_ && *pending_intent_ == body.intent_position) {
            pending_intent_.reset();
            buffer_.push_back(
                {Message{Message::Role::Tool, "action aborted: " + body.reason}, pos});
          }
        } else if constexpr (std::is_same_v<T, ResultBody>) {
          if (body.status == ResultStatus::Recovery) {
            // Executor reboot fence: the in-flight intention may or may
            // not have run; inference decides how to proceed.
            pending_intent_.reset();
            buffer_.push_back({Message{Message::Role::Tool, body.output}, pos});
          } else if (pending_intent_ && body.intent_position &&
                     *pending_intent_ == *body.intent_position) {
            pending_intent_.reset();
            buffer_.push_back({Message{Message::Role::Tool, body.output}, pos});
          }
        } else if constexpr (std::is_same_v<T, PolicyBody>) {
          if (auto election = as_election(body)) {
            elections_.observe(pos, election->epoch);
            if (election->epoch > epoch_) fenced_ = true;
          }
        }
      },
      entry.payload);
  played_up_to_ = pos + 1;
}

void Driver::catch_up() {
  for (const Entry& entry : client_.read(played_up_to_, client_.tail())) play(entry);
  fenced_ = elections_.current_epoch() > epoch_;
}

std::string Driver::run_inference() {
  int attempts = std::max(1, config_.max_inference_attempts);
  std::uint64_t backoff = config_.retry_backoff_ms;
  for (int attempt = 1;; ++attempt) {
    try {
      return adapter_->infer(conversation_);
    } catch (const Error& err) {
      if (attempt >= attempts) {
        return std::string("inference unavailable after ") + std::to_string(attempts) +
               " attempts: " + err.what();
      }
      clock_->sleep_ms(backoff);
      backoff *= 2;
    }
  }
}

StepStatus Driver::step() {
  catch_up();
  if (fenced_) return StepStatus::Fenced;
  if (pending_intent_) return StepStatus::Idle;

  if (pending_extraction_) {
    IntentBody intent{*pending_extraction_, epoch_, infin_count_};
    client_.append(Payload(intent));
    catch_up();
    return fenced_ ? StepStatus::Fenced : StepStatus::Progress;
  }

  if (infin_count_ > infout_count_) {
    // An inference call was cut short before its output reached the log.
    std::string text = run_inference();
    ExtractResult extracted = extract_intent(text);
    client_.append(Payload(InfOutBody{text, extracted.action.has_value()}));
    catch_up();
    return fenced_ ? StepStatus::Fenced : StepStatus::Progress;
  }

  if (!buffer_.empty()) {
    InfInBody infin;
    if (conversation_.messages.empty() && !config_.system_prompt.empty()) {
      infin.delta.push_back(Message{Message::Role::System, config_.system_prompt});
    }
    for (const BufferedInput& input : buffer_) infin.delta.push_back(input.message);
    client_.append(Payload(infin));
    catch_up();
    return fenced_ ? StepStatus::Fenced : StepStatus::Progress;
  }

  return StepStatus::Idle;
}

nlohmann::json Driver::state_json() const {
  nlohmann::json conversation = nlohmann::json::array();
  for (const Message& m : conversation_.messages) conversation.push_back(message_to_json(m));
  nlohmann::json buffer = nlohmann::json::array();
  for (const BufferedInput& input : buffer_) {
    buffer.push_back({{"message", message_to_json(input.message)}, {"source", input.source}});
  }
  nlohmann::json doc{{"buffer", std::move(buffer)},
                     {"conversation", std::move(conversation)},
                     {"elections", elections_.to_json()},
                     {"infin_count", infin_count_},
                     {"infout_count", infout_count_},
                     {"played_up_to", played_up_to_}};
  if (pending_intent_) doc["pending_intent"] = *pending_intent_;
  if (pending_extraction_) doc["pending_extraction"] = action_to_json(*pending_extraction_);
  return doc;
}

Snapshot Driver::make_snapshot() const {
  Snapshot snapshot;
  snapshot.component_id = config_.driver_id;
  snapshot.log_position = played_up_to_;
  snapshot.state = state_json().dump();
  snapshot.created_ts = clock_->now_ms();
  return snapshot;
}

void Driver::restore(const Snapshot& snapshot) {
  nlohmann::json doc = nlohmann::json::parse(snapshot.state, nullptr, false);
  if (doc.is_discarded()) raise(Errc::CorruptSnapshot, "driver snapshot state is not JSON");
  conversation_.messages.clear();
  for (const auto& m : doc.at("conversation")) conversation_.messages.push_back(message_from_json(m));
  buffer_.clear();
  for (const auto& b : doc.at("buffer")) {
    buffer_.push_back({message_from_json(b.at("message")), b.at("source").get<LogPosition>()});
  }
  elections_ = ElectionView::from_json(doc.at("elections"));
  infin_count_ = doc.at("infin_count").get<std::uint64_t>();
  infout_count_ = doc.at("infout_count").get<std::uint64_t>();
  played_up_to_ = doc.at("played_up_to").get<LogPosition>();
  pending_intent_.reset();
  if (doc.contains("pending_intent")) pending_intent_ = doc["pending_intent"].get<LogPosition>();
  pending_extraction_.reset();
  if (doc.contains("pending_extraction")) {
    pending_extraction_ = action_from_json(doc["pending_extraction"]);
  }
  fenced_ = elections_.current_epoch() > epoch_;
}

}  // namespace logact
