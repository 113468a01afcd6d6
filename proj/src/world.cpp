// SPDX-License-Identifier: Apache-2.0
#include "bip/world.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>

namespace bip {
namespace {

std::uint64_t hash_field(std::uint64_t h, std::string_view s) {
  h = fnv1a(s, h);
  return fnv1a(std::string_view("\x1f", 1), h);
}

std::uint64_t hash_number(std::uint64_t h, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return hash_field(h, buf);
}

bool lower_ascii_id(const std::string& id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

}  // namespace

WorldModel::WorldModel(WorldSpec spec) {
  auto index = std::make_shared<Index>();
  auto add = [&](const std::string& id, EntityKind kind) {
    if (!lower_ascii_id(id)) throw StructuralError("id must be non-empty lowercase ASCII: '" + id + "'");
    if (!index->kinds.emplace(id, kind).second) throw StructuralError("duplicate id: " + id);
  };

  if (spec.rooms.empty()) throw StructuralError("world has no rooms");
  if (!(spec.gamma > 0.0 && spec.gamma <= 1.0)) throw StructuralError("gamma must lie in (0, 1]");
  if (!(spec.step_cost >= 0.0)) throw StructuralError("step_cost must be non-negative");
  if (!(spec.goal_reward > 0.0)) throw StructuralError("goal_reward must be positive");

  for (const auto& r : spec.rooms) {
    add(r, EntityKind::Room);
    index->neighbors[r];
    index->containers_in[r];
    index->surfaces_in[r];
  }
  for (const auto& c : spec.containers) {
    add(c.id, EntityKind::Container);
    if (!index->containers_in.count(c.room)) throw StructuralError("container " + c.id + " in unknown room " + c.room);
    index->host[c.id] = c.room;
    index->openable[c.id] = c.openable;
    index->containers_in[c.room].push_back(c.id);
    index->locations.push_back(c.id);
  }
  for (const auto& s : spec.surfaces) {
    add(s.id, EntityKind::Surface);
    if (!index->surfaces_in.count(s.room)) throw StructuralError("surface " + s.id + " in unknown room " + s.room);
    index->host[s.id] = s.room;
    index->surfaces_in[s.room].push_back(s.id);
    index->locations.push_back(s.id);
  }
  for (const auto& i : spec.items) add(i, EntityKind::Item);

  for (const auto& [a, b] : spec.adjacency) {
    if (!index->neighbors.count(a) || !index->neighbors.count(b))
      throw StructuralError("adjacency references unknown room: " + a + "-" + b);
    if (a == b) throw StructuralError("self-adjacency: " + a);
    auto& na = index->neighbors[a];
    auto& nb = index->neighbors[b];
    if (std::find(na.begin(), na.end(), b) == na.end()) na.push_back(b);
    if (std::find(nb.begin(), nb.end(), a) == nb.end()) nb.push_back(a);
  }
  for (auto& [_, v] : index->neighbors) std::sort(v.begin(), v.end());
  for (auto& [_, v] : index->containers_in) std::sort(v.begin(), v.end());
  for (auto& [_, v] : index->surfaces_in) std::sort(v.begin(), v.end());
  std::sort(index->locations.begin(), index->locations.end());

  // All-pairs BFS; doubles as the connectivity check.
  for (const auto& src : spec.rooms) {
    std::map<std::string, int> dist{{src, 0}};
    std::deque<std::string> frontier{src};
    while (!frontier.empty()) {
      auto cur = frontier.front();
      frontier.pop_front();
      for (const auto& n : index->neighbors[cur]) {
        if (dist.emplace(n, dist[cur] + 1).second) frontier.push_back(n);
      }
    }
    if (dist.size() != spec.rooms.size()) throw StructuralError("room graph is not connected");
    for (const auto& [dst, d] : dist) index->distance[{src, dst}] = d;
  }

  std::uint64_t h = kFnvOffset;
  for (const auto& r : spec.rooms) h = hash_field(h, r);
  h = hash_field(h, "|adj");
  for (const auto& [a, b] : spec.adjacency) h = hash_field(hash_field(h, a), b);
  h = hash_field(h, "|containers");
  for (const auto& c : spec.containers) h = hash_field(hash_field(hash_field(h, c.id), c.room), c.openable ? "1" : "0");
  h = hash_field(h, "|surfaces");
  for (const auto& s : spec.surfaces) h = hash_field(hash_field(h, s.id), s.room);
  h = hash_field(h, "|items");
  for (const auto& i : spec.items) h = hash_field(h, i);
  h = hash_number(hash_number(hash_number(h, spec.gamma), spec.step_cost), spec.goal_reward);
  index->fingerprint = h;

  spec_ = std::make_shared<const WorldSpec>(std::move(spec));
  index_ = std::move(index);
}

std::optional<EntityKind> WorldModel::kind_of(const std::string& id) const {
  auto it = index_->kinds.find(id);
  if (it == index_->kinds.end()) return std::nullopt;
  return it->second;
}

bool WorldModel::openable(const std::string& container) const {
  auto it = index_->openable.find(container);
  if (it == index_->openable.end()) throw StructuralError("unknown container: " + container);
  return it->second;
}

const std::string& WorldModel::host_room(const std::string& location) const {
  auto it = index_->host.find(location);
  if (it == index_->host.end()) throw StructuralError("unknown location: " + location);
  return it->second;
}

const std::vector<std::string>& WorldModel::neighbors(const std::string& room) const {
  auto it = index_->neighbors.find(room);
  if (it == index_->neighbors.end()) throw StructuralError("unknown room: " + room);
  return it->second;
}

bool WorldModel::adjacent(const std::string& a, const std::string& b) const {
  const auto& n = neighbors(a);
  return std::binary_search(n.begin(), n.end(), b);
}

const std::vector<std::string>& WorldModel::containers_in(const std::string& room) const {
  auto it = index_->containers_in.find(room);
  if (it == index_->containers_in.end()) throw StructuralError("unknown room: " + room);
  return it->second;
}

const std::vector<std::string>& WorldModel::surfaces_in(const std::string& room) const {
  auto it = index_->surfaces_in.find(room);
  if (it == index_->surfaces_in.end()) throw StructuralError("unknown room: " + room);
  return it->second;
}

int WorldModel::distance(const std::string& from, const std::string& to) const {
  auto it = index_->distance.find({from, to});
  if (it == index_->distance.end()) throw StructuralError("unknown room pair: " + from + "," + to);
  return it->second;
}

const char* kind_name(ActionKind kind) {
  switch (kind) {
    case ActionKind::WalkTo: return "WalkTo";
    case ActionKind::Open: return "Open";
    case ActionKind::Grab: return "Grab";
    case ActionKind::Stay: return "Stay";
  }
  return "?";
}

ActionKind parse_action_kind(const std::string& name) {
  if (name == "WalkTo") return ActionKind::WalkTo;
  if (name == "Open") return ActionKind::Open;
  if (name == "Grab") return ActionKind::Grab;
  if (name == "Stay") return ActionKind::Stay;
  throw StructuralError("unknown action kind: " + name);
}

std::string AgentAction::to_string() const {
  if (kind == ActionKind::Stay) return "Stay";
  return std::string(kind_name(kind)) + "(" + target + ")";
}

void validate_state(const WorldState& state, const WorldModel& world) {
  if (!world.is_room(state.agent_room)) throw StructuralError("agent in unknown room: " + state.agent_room);
  if (state.agent_holding && !world.is_item(*state.agent_holding))
    throw StructuralError("agent holds unknown item: " + *state.agent_holding);

  std::size_t n_containers = 0;
  for (const auto& c : world.spec().containers) {
    ++n_containers;
    auto it = state.container_open.find(c.id);
    if (it == state.container_open.end()) throw StructuralError("container_open missing " + c.id);
    if (!c.openable && !it->second) throw StructuralError("non-openable container is closed: " + c.id);
  }
  if (state.container_open.size() != n_containers) throw StructuralError("container_open has unknown keys");

  for (const auto& [item, loc] : state.placement) {
    if (!world.is_item(item)) throw StructuralError("placement of unknown item: " + item);
    if (!world.is_location(loc)) throw StructuralError("item " + item + " at unknown location " + loc);
  }
  for (const auto& item : world.items()) {
    const bool held = state.agent_holding == item;
    const bool placed = state.placement.count(item) > 0;
    if (held && placed) throw StructuralError("held item also placed: " + item);
    if (!held && !placed) throw StructuralError("item neither held nor placed: " + item);
  }
}

WorldState make_state(const WorldModel& world, const std::string& room,
                      std::map<std::string, std::string> placement) {
  WorldState s;
  s.agent_room = room;
  for (const auto& c : world.spec().containers) s.container_open[c.id] = !c.openable;
  s.placement = std::move(placement);
  validate_state(s, world);
  return s;
}

std::vector<std::string> inspected_locations(const WorldState& state, const WorldModel& world) {
  std::vector<std::string> out;
  for (const auto& c : world.containers_in(state.agent_room)) {
    if (state.container_open.at(c)) out.push_back(c);
  }
  for (const auto& s : world.surfaces_in(state.agent_room)) out.push_back(s);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> visible_items(const WorldState& state, const WorldModel& world) {
  const auto inspected = inspected_locations(state, world);
  std::vector<std::string> out;
  for (const auto& [item, loc] : state.placement) {
    if (std::binary_search(inspected.begin(), inspected.end(), loc)) out.push_back(item);
  }
  return out;  // placement is a sorted map, so already ordered
}

std::vector<AgentAction> legal_actions(const WorldState& state, const WorldModel& world) {
  validate_state(state, world);
  std::vector<AgentAction> out;
  for (const auto& r : world.neighbors(state.agent_room)) out.push_back(AgentAction::walk_to(r));
  for (const auto& c : world.containers_in(state.agent_room)) {
    if (!state.container_open.at(c)) out.push_back(AgentAction::open(c));
  }
  if (!state.agent_holding) {
    for (const auto& item : visible_items(state, world)) out.push_back(AgentAction::grab(item));
  }
  out.push_back(AgentAction::stay());
  return out;
}

WorldState transition(const WorldState& state, const AgentAction& action, const WorldModel& world) {
  const auto legal = legal_actions(state, world);
  if (std::find(legal.begin(), legal.end(), action) == legal.end())
    throw PreconditionError("illegal action " + action.to_string() + " in room " + state.agent_room);
  WorldState next = state;
  switch (action.kind) {
    case ActionKind::WalkTo: next.agent_room = action.target; break;
    case ActionKind::Open: next.container_open[action.target] = true; break;
    case ActionKind::Grab:
      next.placement.erase(action.target);
      next.agent_holding = action.target;
      break;
    case ActionKind::Stay: break;
  }
  return next;
}

Observation observe(const WorldState& state, const WorldModel& world) {
  validate_state(state, world);
  Observation o;
  o.visible_rooms.insert(state.agent_room);
  for (const auto& c : world.containers_in(state.agent_room)) o.visible_container_states[c] = state.container_open.at(c);
  const auto inspected = inspected_locations(state, world);
  for (const auto& [item, loc] : state.placement) {
    if (std::binary_search(inspected.begin(), inspected.end(), loc)) o.visible_placements[item] = loc;
  }
  return o;
}

void verify_episode(const Episode& episode) {
  if (episode.steps.empty()) throw StructuralError("episode has no steps");
  if (!episode.world.is_item(episode.true_goal)) throw StructuralError("unknown true_goal: " + episode.true_goal);
  for (const auto& [item, loc] : episode.prior_knowledge) {
    if (!episode.world.is_item(item) || !episode.world.is_location(loc))
      throw StructuralError("prior_knowledge references unknown ids: " + item + "@" + loc);
  }
  WorldState s = episode.initial_state;
  validate_state(s, episode.world);
  for (std::size_t i = 0; i < episode.steps.size(); ++i) {
    const auto& step = episode.steps[i];
    WorldState next;
    try {
      next = transition(s, step.action, episode.world);
    } catch (const PreconditionError& e) {
      throw StructuralError("episode step " + std::to_string(i) + ": " + e.what());
    }
    if (next != step.state) throw StructuralError("episode step " + std::to_string(i) + ": recorded state mismatch");
    if (observe(next, episode.world) != step.observation)
      throw StructuralError("episode step " + std::to_string(i) + ": recorded observation mismatch");
    s = std::move(next);
  }
}

Episode episode_prefix(const Episode& episode, std::size_t steps) {
  if (steps == 0 || steps > episode.steps.size()) throw PreconditionError("episode_prefix: bad length");
  Episode out = episode;
  out.steps.resize(steps);
  return out;
}

}  // namespace bip
