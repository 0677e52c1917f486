#include "logact/log_play.hpp"

#include <algorithm>

#include "logact/errors.hpp"

namespace logact {

void ElectionView::observe(LogPosition position, std::uint64_t epoch) {
  std::uint64_t running = std::max(current_epoch(), epoch);
  if (!max_by_position_.empty() && max_by_position_.back().first == position) {
    max_by_position_.back().second = running;
    return;
  }
  max_by_position_.emplace_back(position, running);
}

std::uint64_t ElectionView::epoch_at(LogPosition position) const {
  std::uint64_t epoch = 0;
  for (const auto& [pos, running] : max_by_position_) {
    if (pos >= position) break;
    epoch = running;
  }
  return epoch;
}

std::uint64_t ElectionView::current_epoch() const {
  return max_by_position_.empty() ? 0 : max_by_position_.back().second;
}

nlohmann::json ElectionView::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [pos, epoch] : max_by_position_) out.push_back({pos, epoch});
  return out;
}

ElectionView ElectionView::from_json(const nlohmann::json& doc) {
  ElectionView view;
  for (const auto& pair : doc) {
    view.max_by_position_.emplace_back(pair.at(0).get<LogPosition>(),
                                       pair.at(1).get<std::uint64_t>());
  }
  return view;
}

namespace {

std::optional<ParsedPolicy> try_parse(const PolicyBody& policy) {
  try {
    return parse_policy(policy.body);
  } catch (const Error&) {
    return std::nullopt;  // unparseable policy entries are skipped by players
  }
}

}  // namespace

std::optional<DriverElection> as_election(const PolicyBody& policy) {
  if (policy.kind != PolicyKind::DriverElection) return std::nullopt;
  auto parsed = try_parse(policy);
  if (!parsed || !std::holds_alternative<DriverElection>(*parsed)) return std::nullopt;
  return std::get<DriverElection>(*parsed);
}

std::optional<DeciderPolicy> as_decider_policy(const PolicyBody& policy) {
  if (policy.kind != PolicyKind::Decider) return std::nullopt;
  auto parsed = try_parse(policy);
  if (!parsed || !std::holds_alternative<DeciderPolicy>(*parsed)) return std::nullopt;
  return std::get<DeciderPolicy>(*parsed);
}

std::optional<VoterPolicy> as_voter_policy(const PolicyBody& policy) {
  if (policy.kind != PolicyKind::Voter) return std::nullopt;
  auto parsed = try_parse(policy);
  if (!parsed || !std::holds_alternative<VoterPolicy>(*parsed)) return std::nullopt;
  return std::get<VoterPolicy>(*parsed);
}

ElectionOutcome driver_elect(const BusClient& client, const std::string& candidate_id) {
  auto scan_max_epoch = [&](LogPosition end) {
    std::uint64_t max_epoch = 0;
    for (const Entry& entry : client.read(0, end)) {
      if (const auto* policy = std::get_if<PolicyBody>(&entry.payload)) {
        if (auto election = as_election(*policy)) {
          max_epoch = std::max(max_epoch, election->epoch);
        }
      }
    }
    return max_epoch;
  };

  while (true) {
    std::uint64_t epoch = scan_max_epoch(client.tail()) + 1;
    DriverElection election{epoch, candidate_id};
    PolicyBody body = make_policy_body(candidate_id, policy_document(election));
    LogPosition position = client.append(Payload(body));
    // A concurrent election may have claimed this epoch at an earlier
    // slot; if so our entry is stale and we go again.
    if (scan_max_epoch(position) < epoch) return {epoch, position};
  }
}

}  // namespace logact
