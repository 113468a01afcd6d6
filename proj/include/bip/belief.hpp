// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "bip/world.hpp"

namespace bip {

inline constexpr double kDefaultBeliefFloor = 1e-6;

/// Candidate locations for one item (sorted) with matching weights.
struct ItemBelief {
  std::vector<std::string> candidates;
  std::vector<double> weights;
  bool operator==(const ItemBelief&) const = default;
};

/// Factorized belief over item locations.
struct BeliefState {
  std::map<std::string, ItemBelief> per_item;
  /// Items whose last update would have emptied the candidate set. Diagnostic
  /// only; not part of equality.
  std::set<std::string> degenerate;

  bool operator==(const BeliefState& other) const { return per_item == other.per_item; }

  const ItemBelief& at(const std::string& item) const;
  bool tracks(const std::string& item) const { return per_item.count(item) > 0; }
  /// Weight on `location` for `item` (0 if not a candidate).
  double mass(const std::string& item, const std::string& location) const;
};

/// The agent's asserted belief about one item: "believes item is (not) at".
struct BeliefHypothesis {
  std::string item;
  std::string asserted_location;
  bool polarity = true;  // true: believes-in, false: believes-not-in
  bool operator==(const BeliefHypothesis&) const = default;
};

/// Uniform belief over every location for each tracked item.
BeliefState init_belief(const WorldModel& world, const std::vector<std::string>& tracked_items);

/// Same as init_belief, then collapses items the agent already "knows" about.
BeliefState init_belief(const WorldModel& world, const std::vector<std::string>& tracked_items,
                        const std::map<std::string, std::string>& prior_knowledge);

/// Deterministic update: an observed item collapses onto its location;
/// otherwise every location inspected this step (open container or surface
/// in the visible room) that did not show the item is removed. Survivors are
/// reweighted uniformly. An update that would empty a set leaves it
/// unchanged and flags the item in `degenerate`.
BeliefState update_belief(const BeliefState& belief, const Observation& observation, const WorldModel& world);

/// 1.0 if `next` is exactly the deterministic update of `prev`, else `floor`.
double transition_likelihood(const BeliefState& prev, const BeliefState& next, const Observation& observation,
                             const WorldModel& world, double floor = kDefaultBeliefFloor);

/// Weight the belief gives to the hypothesis, floored at `floor`.
double hypothesis_consistency(const BeliefHypothesis& hyp, const BeliefState& belief,
                              double floor = kDefaultBeliefFloor);

/// Throws StructuralError unless every candidate set is non-empty, sorted,
/// references world locations, and weights are positive and sum to 1.
void validate_belief(const BeliefState& belief, const WorldModel& world);

}  // namespace bip
