// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "bip/world.hpp"

namespace bip {

struct PlanConfig {
  double tolerance = 1e-9;
  int max_iterations = 10000;
};

/// Goal-conditioned action values under full observability.
///
/// The abstract state is (agent room, hands empty / holding another item /
/// holding the goal, goal location, open flag of the goal's container).
/// Grabbing the goal pays goal_reward and enters an absorbing success state
/// where Stay is free; every other action costs step_cost. Grabbing any other
/// item leaves the goal unreachable.
class PlanValues {
 public:
  const std::string& goal() const { return goal_; }
  int iterations() const { return iterations_; }

  /// Q(s, a) with the goal at its true location in `state`.
  double q(const WorldState& state, const AgentAction& action) const;
  /// Q(s, a) as if the goal were at `goal_location` (ignores where the state
  /// actually puts it). Used for belief-expected values.
  double q_at(const WorldState& state, const std::string& goal_location, const AgentAction& action) const;
  /// max_a Q(s, a) over legal actions.
  double value(const WorldState& state) const;

  double success_value() const { return 0.0; }
  double failure_value() const { return failure_value_; }

 private:
  friend PlanValues plan_values(const WorldModel&, const std::string&, const PlanConfig&);
  PlanValues(const WorldModel& world, std::string goal);

  std::size_t search_index(std::size_t room, std::size_t loc, int open) const {
    return (room * n_locations_ + loc) * 2 + static_cast<std::size_t>(open);
  }
  double search_value(const std::string& room, const std::string& loc, bool open) const;
  bool goal_visible(const std::string& room, const std::string& loc, bool open) const;

  WorldModel world_;
  std::string goal_;
  std::size_t n_locations_ = 0;
  std::unordered_map<std::string, std::size_t> room_index_;
  std::unordered_map<std::string, std::size_t> location_index_;
  std::vector<double> search_values_;
  double failure_value_ = 0.0;
  int iterations_ = 0;
};

/// Value iteration to `tolerance` (sup-norm change). Throws
/// ConvergenceError past max_iterations, StructuralError on unknown goal.
PlanValues plan_values(const WorldModel& world, const std::string& goal, const PlanConfig& config = {});

/// Thread-safe memo of plan_values keyed by (world fingerprint, goal).
class PlanCache {
 public:
  std::shared_ptr<const PlanValues> get(const WorldModel& world, const std::string& goal) const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, std::shared_ptr<const PlanValues>> entries_;
};

}  // namespace bip
