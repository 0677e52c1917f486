#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "json.hpp"
#include "logact/types.hpp"

namespace logact::harness {

// Per-stage cumulative durations and per-type storage accounting,
// derived from log timestamps and canonical payload bytes.
struct StageMetrics {
  std::uint64_t inferring_ms{0};
  std::uint64_t voting_ms{0};
  std::uint64_t deciding_ms{0};
  std::uint64_t executing_ms{0};
  std::array<std::uint64_t, kPayloadTypeCount> bytes_per_type{};
  std::array<std::uint64_t, kPayloadTypeCount> count_per_type{};

  std::uint64_t total_payload_bytes() const;
  nlohmann::json to_json() const;
  std::string to_csv() const;

  static StageMetrics from_entries(std::span<const Entry> entries);
};

}  // namespace logact::harness
