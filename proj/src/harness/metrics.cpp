#include "logact/harness/metrics.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "logact/serde.hpp"

namespace logact::harness {

std::uint64_t StageMetrics::total_payload_bytes() const {
  std::uint64_t total = 0;
  for (auto b : bytes_per_type) total += b;
  return total;
}

StageMetrics StageMetrics::from_entries(std::span<const Entry> entries) {
  StageMetrics metrics;

  struct IntentTiming {
    std::uint64_t intent_ts{0};
    std::uint64_t last_vote_ts{0};
    bool has_vote{false};
    std::uint64_t decision_ts{0};
    bool decided{false};
    std::uint64_t commit_ts{0};
    bool committed{false};
    bool executed{false};
  };
  std::map<LogPosition, IntentTiming> intents;
  std::uint64_t last_infin_ts = 0;
  bool infin_open = false;

  for (const Entry& entry : entries) {
    int type = static_cast<int>(payload_type(entry.payload));
    metrics.bytes_per_type[type] += serialize_payload(entry.payload).size();
    metrics.count_per_type[type] += 1;

    if (std::holds_alternative<InfInBody>(entry.payload)) {
      last_infin_ts = entry.realtime_ts;
      infin_open = true;
    } else if (std::holds_alternative<InfOutBody>(entry.payload)) {
      if (infin_open) {
        metrics.inferring_ms += entry.realtime_ts - last_infin_ts;
        infin_open = false;
      }
    } else if (std::holds_alternative<IntentBody>(entry.payload)) {
      intents[entry.position].intent_ts = entry.realtime_ts;
    } else if (const auto* vote = std::get_if<VoteBody>(&entry.payload)) {
      auto it = intents.find(vote->intent_position);
      if (it != intents.end() && !it->second.decided) {
        it->second.last_vote_ts = entry.realtime_ts;
        it->second.has_vote = true;
      }
    } else if (const auto* commit = std::get_if<CommitBody>(&entry.payload)) {
      auto it = intents.find(commit->intent_position);
      if (it != intents.end()) {
        if (!it->second.decided) {
          it->second.decided = true;
          it->second.decision_ts = entry.realtime_ts;
        }
        if (!it->second.committed) {
          it->second.committed = true;
          it->second.commit_ts = entry.realtime_ts;
        }
      }
    } else if (const auto* abort = std::get_if<AbortBody>(&entry.payload)) {
      auto it = intents.find(abort->intent_position);
      if (it != intents.end() && !it->second.decided) {
        it->second.decided = true;
        it->second.decision_ts = entry.realtime_ts;
      }
    } else if (const auto* result = std::get_if<ResultBody>(&entry.payload)) {
      if (result->intent_position && result->status != ResultStatus::Recovery) {
        auto it = intents.find(*result->intent_position);
        if (it != intents.end() && it->second.committed && !it->second.executed) {
          it->second.executed = true;
          metrics.executing_ms += entry.realtime_ts - it->second.commit_ts;
        }
      }
    }
  }

  for (const auto& [pos, timing] : intents) {
    if (timing.has_vote) metrics.voting_ms += timing.last_vote_ts - timing.intent_ts;
    if (timing.decided) {
      std::uint64_t from = timing.has_vote ? timing.last_vote_ts : timing.intent_ts;
      metrics.deciding_ms += timing.decision_ts - std::min(timing.decision_ts, from);
    }
  }
  return metrics;
}

nlohmann::json StageMetrics::to_json() const {
  nlohmann::json bytes = nlohmann::json::object();
  nlohmann::json counts = nlohmann::json::object();
  for (int i = 0; i < kPayloadTypeCount; ++i) {
    std::string name(payload_type_name(static_cast<PayloadType>(i)));
    bytes[name] = bytes_per_type[i];
    counts[name] = count_per_type[i];
  }
  return nlohmann::json{{"bytes_per_type", std::move(bytes)},
                        {"deciding_ms", deciding_ms},
                        {"entry_count_per_type", std::move(counts)},
                        {"executing_ms", executing_ms},
                        {"inferring_ms", inferring_ms},
                        {"total_payload_bytes", total_payload_bytes()},
                        {"voting_ms", voting_ms}};
}

std::string StageMetrics::to_csv() const {
  std::ostringstream out;
  out << "stage,duration_ms\n";
  out << "inferring," << inferring_ms << "\n";
  out << "voting," << voting_ms << "\n";
  out << "deciding," << deciding_ms << "\n";
  out << "executing," << executing_ms << "\n";
  out << "type,entries,payload_bytes\n";
  for (int i = 0; i < kPayloadTypeCount; ++i) {
    out << payload_type_name(static_cast<PayloadType>(i)) << "," << count_per_type[i] << ","
        << bytes_per_type[i] << "\n";
  }
  return out.str();
}

}  // namespace logact::harness
