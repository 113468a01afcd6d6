// SPDX-License-Identifier: Apache-2.0
#include "bip/simulate.hpp"

#include <memory>

#include "bip/belief.hpp"
#include "bip/policy.hpp"

namespace bip {

Episode simulate_episode(const WorldModel& world, const std::string& goal, const WorldState& initial_state,
                         double temperature, int horizon, std::uint64_t seed, const SimulationOptions& options) {
  if (horizon < 1) throw PreconditionError("simulate_episode: horizon must be >= 1");
  if (!(temperature > 0.0)) throw PreconditionError("simulate_episode: temperature must be positive");
  validate_state(initial_state, world);

  std::shared_ptr<const PlanValues> plan =
      options.cache ? options.cache->get(world, goal) : std::make_shared<const PlanValues>(plan_values(world, goal));

  Episode ep{world, initial_state, {}, goal, seed, options.prior_knowledge};
  Rng rng(seed);
  BeliefState belief = init_belief(world, world.items(), options.prior_knowledge);
  belief = update_belief(belief, observe(initial_state, world), world);

  WorldState state = initial_state;
  if (state.agent_holding == goal) {
    ep.steps.push_back({AgentAction::stay(), state, observe(state, world)});
    return ep;
  }
  for (int t = 0; t < horizon && state.agent_holding != goal; ++t) {
    const auto candidates = legal_actions(state, world);
    std::vector<double> q;
    q.reserve(candidates.size());
    for (const auto& a : candidates) q.push_back(belief_expected_q(*plan, state, belief, a));
    const auto probs = boltzmann(q, temperature);

    double u = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < probs.size() && u >= probs[k]) {
      u -= probs[k];
      ++k;
    }
    WorldState next = transition(state, candidates[k], world);
    Observation obs = observe(next, world);
    belief = update_belief(belief, obs, world);
    ep.steps.push_back({candidates[k], next, std::move(obs)});
    state = std::move(next);
  }
  return ep;
}

}  // namespace bip
