#pragma once

#include <cstdint>

#include "logact/harness/scenario.hpp"

namespace logact::harness {

// Seeded generator behind the randomized protocol-safety suite: random
// task chains, quorum policies, voter sets, attack intents, escape
// probes, and fault schedules (kills + restarts at random append
// boundaries). Every generated scenario carries the invariant oracle.
Scenario random_scenario(std::uint64_t seed);

}  // namespace logact::harness
