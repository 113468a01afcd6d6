// SPDX-License-Identifier: Apache-2.0
#include "bip/belief.hpp"

#include <algorithm>
#include <cmath>

namespace bip {
namespace {

ItemBelief uniform_over(std::vector<std::string> candidates) {
  ItemBelief b;
  const double w = 1.0 / static_cast<double>(candidates.size());
  b.weights.assign(candidates.size(), w);
  b.candidates = std::move(candidates);
  return b;
}

}  // namespace

const ItemBelief& BeliefState::at(const std::string& item) const {
  auto it = per_item.find(item);
  if (it == per_item.end()) throw StructuralError("item not tracked by belief: " + item);
  return it->second;
}

double BeliefState::mass(const std::string& item, const std::string& location) const {
  const auto& b = at(item);
  auto it = std::lower_bound(b.candidates.begin(), b.candidates.end(), location);
  if (it == b.candidates.end() || *it != location) return 0.0;
  return b.weights[static_cast<std::size_t>(it - b.candidates.begin())];
}

BeliefState init_belief(const WorldModel& world, const std::vector<std::string>& tracked_items) {
  if (world.locations().empty()) throw StructuralError("world has no locations");
  BeliefState b;
  for (const auto& item : tracked_items) {
    if (!world.is_item(item)) throw StructuralError("unknown item: " + item);
    b.per_item[item] = uniform_over(world.locations());
  }
  return b;
}

BeliefState init_belief(const WorldModel& world, const std::vector<std::string>& tracked_items,
                        const std::map<std::string, std::string>& prior_knowledge) {
  BeliefState b = init_belief(world, tracked_items);
  for (const auto& [item, loc] : prior_knowledge) {
    if (!world.is_location(loc)) throw StructuralError("prior knowledge at unknown location: " + loc);
    auto it = b.per_item.find(item);
    if (it != b.per_item.end()) it->second = uniform_over({loc});
  }
  return b;
}

BeliefState update_belief(const BeliefState& belief, const Observation& observation, const WorldModel& world) {
  std::vector<std::string> inspected;
  for (const auto& room : observation.visible_rooms) {
    for (const auto& [c, open] : observation.visible_container_states) {
      if (world.host_room(c) == room && open) inspected.push_back(c);
    }
    for (const auto& s : world.surfaces_in(room)) inspected.push_back(s);
  }
  // Non-openable containers are reported open, so they are covered above.
  std::sort(inspected.begin(), inspected.end());

  BeliefState next;
  for (const auto& [item, ib] : belief.per_item) {
    auto seen = observation.visible_placements.find(item);
    if (seen != observation.visible_placements.end()) {
      next.per_item[item] = uniform_over({seen->second});
      continue;
    }
    std::vector<std::string> survivors;
    for (const auto& loc : ib.candidates) {
      if (!std::binary_search(inspected.begin(), inspected.end(), loc)) survivors.push_back(loc);
    }
    if (survivors.empty()) {
      next.per_item[item] = ib;
      next.degenerate.insert(item);
    } else if (survivors.size() == ib.candidates.size()) {
      next.per_item[item] = ib;
    } else {
      next.per_item[item] = uniform_over(std::move(survivors));
    }
  }
  return next;
}

double transition_likelihood(const BeliefState& prev, const BeliefState& next, const Observation& observation,
                             const WorldModel& world, double floor) {
  if (prev.per_item.size() != next.per_item.size() ||
      !std::equal(prev.per_item.begin(), prev.per_item.end(), next.per_item.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw StructuralError("transition_likelihood: beliefs track different items");
  }
  return update_belief(prev, observation, world) == next ? 1.0 : floor;
}

double hypothesis_consistency(const BeliefHypothesis& hyp, const BeliefState& belief, double floor) {
  const double m = belief.mass(hyp.item, hyp.asserted_location);
  const double p = hyp.polarity ? m : 1.0 - m;
  return std::max(p, floor);
}

void validate_belief(const BeliefState& belief, const WorldModel& world) {
  for (const auto& [item, ib] : belief.per_item) {
    if (!world.is_item(item)) throw StructuralError("belief tracks unknown item: " + item);
    if (ib.candidates.empty()) throw StructuralError("empty candidate set for " + item);
    if (ib.candidates.size() != ib.weights.size()) throw StructuralError("weights misaligned for " + item);
    if (!std::is_sorted(ib.candidates.begin(), ib.candidates.end()) ||
        std::adjacent_find(ib.candidates.begin(), ib.candidates.end()) != ib.candidates.end())
      throw StructuralError("candidates not a sorted set for " + item);
    double total = 0.0;
    for (std::size_t i = 0; i < ib.candidates.size(); ++i) {
      if (!world.is_location(ib.candidates[i])) throw StructuralError("unknown candidate " + ib.candidates[i]);
      if (!(ib.weights[i] > 0.0)) throw StructuralError("non-positive weight for " + item);
      total += ib.weights[i];
    }
    if (std::abs(total - 1.0) > 1e-12) throw StructuralError("weights do not sum to 1 for " + item);
  }
}

}  // namespace bip
