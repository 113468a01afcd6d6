// SPDX-License-Identifier: Apache-2.0
#include "bip/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bip {

PlanValues::PlanValues(const WorldModel& world, std::string goal) : world_(world), goal_(std::move(goal)) {}

bool PlanValues::goal_visible(const std::string& room, const std::string& loc, bool open) const {
  if (world_.host_room(loc) != room) return false;
  return world_.is_surface(loc) || open || !world_.openable(loc);
}

double PlanValues::search_value(const std::string& room, const std::string& loc, bool open) const {
  const bool effective_open = world_.is_surface(loc) || !world_.openable(loc) || open;
  return search_values_[search_index(room_index_.at(room), location_index_.at(loc), effective_open ? 1 : 0)];
}

double PlanValues::q_at(const WorldState& state, const std::string& goal_location, const AgentAction& action) const {
  const double c = world_.step_cost();
  const double gamma = world_.gamma();
  if (state.agent_holding == goal_) {
    return action.kind == ActionKind::Stay ? 0.0 : -c;
  }
  if (state.agent_holding) return -c + gamma * failure_value_;

  if (!location_index_.count(goal_location)) throw StructuralError("unknown goal location: " + goal_location);
  const std::string& room = state.agent_room;
  const bool open = world_.is_container(goal_location) ? state.container_open.at(goal_location) : true;
  const double stay = -c + gamma * search_value(room, goal_location, open);

  switch (action.kind) {
    case ActionKind::WalkTo:
      if (!world_.adjacent(room, action.target)) return stay;
      return -c + gamma * search_value(action.target, goal_location, open);
    case ActionKind::Open:
      if (action.target == goal_location) return -c + gamma * search_value(room, goal_location, true);
      return stay;
    case ActionKind::Grab:
      if (action.target == goal_) {
        return goal_visible(room, goal_location, open) ? world_.goal_reward() : stay;
      }
      return -c + gamma * failure_value_;
    case ActionKind::Stay:
      return stay;
  }
  return stay;
}

double PlanValues::q(const WorldState& state, const AgentAction& action) const {
  if (state.agent_holding) return q_at(state, {}, action);
  auto it = state.placement.find(goal_);
  if (it == state.placement.end()) throw StructuralError("goal not placed: " + goal_);
  return q_at(state, it->second, action);
}

double PlanValues::value(const WorldState& state) const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& a : legal_actions(state, world_)) best = std::max(best, q(state, a));
  return best;
}

PlanValues plan_values(const WorldModel& world, const std::string& goal, const PlanConfig& config) {
  if (!world.is_item(goal)) throw StructuralError("unknown goal item: " + goal);
  PlanValues pv(world, goal);
  const auto& rooms = world.rooms();
  const auto& locs = world.locations();
  if (locs.empty()) throw StructuralError("world has no locations");
  for (std::size_t i = 0; i < rooms.size(); ++i) pv.room_index_[rooms[i]] = i;
  for (std::size_t i = 0; i < locs.size(); ++i) pv.location_index_[locs[i]] = i;
  pv.n_locations_ = locs.size();

  const double c = world.step_cost();
  const double gamma = world.gamma();
  const double reward = world.goal_reward();
  const bool has_failure = world.items().size() > 1;

  // Precompute per-location facts.
  std::vector<std::size_t> host(locs.size());
  std::vector<bool> always_visible(locs.size());
  std::vector<bool> can_open(locs.size());
  for (std::size_t l = 0; l < locs.size(); ++l) {
    host[l] = pv.room_index_.at(world.host_room(locs[l]));
    const bool openable_container = world.is_container(locs[l]) && world.openable(locs[l]);
    always_visible[l] = !openable_container;
    can_open[l] = openable_container;
  }
  std::vector<std::vector<std::size_t>> nbrs(rooms.size());
  for (std::size_t r = 0; r < rooms.size(); ++r) {
    for (const auto& n : world.neighbors(rooms[r])) nbrs[r].push_back(pv.room_index_.at(n));
  }

  std::vector<double> v(rooms.size() * locs.size() * 2, 0.0);
  std::vector<double> next(v.size(), 0.0);
  double fail = 0.0;
  int it = 0;
  for (;; ++it) {
    if (it >= config.max_iterations) {
      throw ConvergenceError("value iteration did not converge within " + std::to_string(config.max_iterations) +
                             " iterations (goal " + goal + ")");
    }
    double delta = 0.0;
    for (std::size_t r = 0; r < rooms.size(); ++r) {
      for (std::size_t l = 0; l < locs.size(); ++l) {
        for (int o = 0; o < 2; ++o) {
          const int eff = always_visible[l] ? 1 : o;
          const auto idx = pv.search_index(r, l, o);
          double best = -c + gamma * v[pv.search_index(r, l, eff)];  // Stay
          for (auto n : nbrs[r]) best = std::max(best, -c + gamma * v[pv.search_index(n, l, eff)]);
          if (host[l] == r) {
            if (eff == 1) best = std::max(best, reward);
            else if (can_open[l]) best = std::max(best, -c + gamma * v[pv.search_index(r, l, 1)]);
          }
          next[idx] = best;
          delta = std::max(delta, std::abs(best - v[idx]));
        }
      }
    }
    double next_fail = has_failure ? -c + gamma * fail : 0.0;
    delta = std::max(delta, std::abs(next_fail - fail));
    v.swap(next);
    fail = next_fail;
    if (!std::isfinite(delta)) throw ConvergenceError("value iteration diverged (goal " + goal + ")");
    if (delta < config.tolerance) break;
  }
  pv.search_values_ = std::move(v);
  pv.failure_value_ = fail;
  pv.iterations_ = it + 1;
  return pv;
}

std::shared_ptr<const PlanValues> PlanCache::get(const WorldModel& world, const std::string& goal) const {
  const std::string key = to_hex(world.fingerprint()) + "/" + goal;
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) return it->second;
  }
  // Computed outside the lock; concurrent misses compute identical values.
  auto pv = std::make_shared<const PlanValues>(plan_values(world, goal));
  std::lock_guard lock(mutex_);
  return entries_.emplace(key, std::move(pv)).first->second;
}

std::size_t PlanCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace bip
