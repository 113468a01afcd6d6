// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "bip/planner.hpp"
#include "bip/world.hpp"

namespace bip {

struct SimulationOptions {
  /// Locations the agent remembers at the start (possibly wrong).
  std::map<std::string, std::string> prior_knowledge;
  /// Optional shared plan memo.
  const PlanCache* cache = nullptr;
};

/// Forward agent: tracks its own belief with update_belief and samples each
/// action from the Boltzmann distribution over belief-expected Q-values.
/// Stops after `horizon` steps or once the goal is held. Deterministic in
/// `seed`.
Episode simulate_episode(const WorldModel& world, const std::string& goal, const WorldState& initial_state,
                         double temperature, int horizon, std::uint64_t seed, const SimulationOptions& options = {});

}  // namespace bip
