// SPDX-License-Identifier: Apache-2.0
//
// Symbolic household world: rooms joined by doors, containers and surfaces
// hosted in rooms, and items placed on/in those locations. The agent walks,
// opens containers and grabs items; it sees only its current room.
#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "bip/common.hpp"

namespace bip {

struct ContainerSpec {
  std::string id;
  std::string room;
  // Non-openable containers are permanently open (shelves, baskets).
  bool openable = true;
  bool operator==(const ContainerSpec&) const = default;
};

struct SurfaceSpec {
  std::string id;
  std::string room;
  bool operator==(const SurfaceSpec&) const = default;
};

/// Plain description of a world; validated by WorldModel's constructor.
struct WorldSpec {
  std::vector<std::string> rooms;
  std::vector<std::pair<std::string, std::string>> adjacency;
  std::vector<ContainerSpec> containers;
  std::vector<SurfaceSpec> surfaces;
  std::vector<std::string> items;
  double gamma = 0.95;
  double step_cost = 1.0;
  double goal_reward = 10.0;
  bool operator==(const WorldSpec&) const = default;
};

enum class EntityKind { Room, Container, Surface, Item };

/// Validated, indexed, immutable world. Cheap lookups by id.
class WorldModel {
 public:
  /// Throws StructuralError if any WorldSpec invariant fails.
  explicit WorldModel(WorldSpec spec);

  const WorldSpec& spec() const { return *spec_; }
  const std::vector<std::string>& rooms() const { return spec_->rooms; }
  const std::vector<std::string>& items() const { return spec_->items; }
  double gamma() const { return spec_->gamma; }
  double step_cost() const { return spec_->step_cost; }
  double goal_reward() const { return spec_->goal_reward; }

  std::optional<EntityKind> kind_of(const std::string& id) const;
  bool is_room(const std::string& id) const { return kind_of(id) == EntityKind::Room; }
  bool is_container(const std::string& id) const { return kind_of(id) == EntityKind::Container; }
  bool is_surface(const std::string& id) const { return kind_of(id) == EntityKind::Surface; }
  bool is_item(const std::string& id) const { return kind_of(id) == EntityKind::Item; }
  bool is_location(const std::string& id) const { return is_container(id) || is_surface(id); }

  bool openable(const std::string& container) const;
  /// Room hosting a container or surface.
  const std::string& host_room(const std::string& location) const;
  /// Adjacent rooms, sorted.
  const std::vector<std::string>& neighbors(const std::string& room) const;
  bool adjacent(const std::string& a, const std::string& b) const;
  /// Containers and surfaces in a room, each sorted.
  const std::vector<std::string>& containers_in(const std::string& room) const;
  const std::vector<std::string>& surfaces_in(const std::string& room) const;
  /// Every container and surface id, sorted.
  const std::vector<std::string>& locations() const { return index_->locations; }
  /// Shortest-path door count between rooms.
  int distance(const std::string& from, const std::string& to) const;

  /// Stable content hash (FNV-1a over the canonical JSON form).
  std::uint64_t fingerprint() const { return index_->fingerprint; }

  bool operator==(const WorldModel& other) const { return *spec_ == *other.spec_; }

 private:
  struct Index {
    std::map<std::string, EntityKind> kinds;
    std::map<std::string, std::string> host;
    std::map<std::string, bool> openable;
    std::map<std::string, std::vector<std::string>> neighbors;
    std::map<std::string, std::vector<std::string>> containers_in;
    std::map<std::string, std::vector<std::string>> surfaces_in;
    std::map<std::pair<std::string, std::string>, int> distance;
    std::vector<std::string> locations;
    std::uint64_t fingerprint = 0;
  };
  std::shared_ptr<const WorldSpec> spec_;
  std::shared_ptr<const Index> index_;
};

struct WorldState {
  std::string agent_room;
  std::optional<std::string> agent_holding;
  std::map<std::string, bool> container_open;
  std::map<std::string, std::string> placement;
  bool operator==(const WorldState&) const = default;
};

enum class ActionKind { WalkTo = 0, Open = 1, Grab = 2, Stay = 3 };

/// Ordering is (kind in WalkTo, Open, Grab, Stay order, then target id),
/// which is the canonical candidate order used for policy normalization.
struct AgentAction {
  ActionKind kind = ActionKind::Stay;
  std::string target;  // empty for Stay

  static AgentAction walk_to(std::string room) { return {ActionKind::WalkTo, std::move(room)}; }
  static AgentAction open(std::string container) { return {ActionKind::Open, std::move(container)}; }
  static AgentAction grab(std::string item) { return {ActionKind::Grab, std::move(item)}; }
  static AgentAction stay() { return {ActionKind::Stay, {}}; }

  std::string to_string() const;
  auto operator<=>(const AgentAction&) const = default;
};

const char* kind_name(ActionKind kind);
ActionKind parse_action_kind(const std::string& name);

struct Observation {
  std::set<std::string> visible_rooms;
  std::map<std::string, bool> visible_container_states;
  std::map<std::string, std::string> visible_placements;
  bool operator==(const Observation&) const = default;
};

struct EpisodeStep {
  AgentAction action;
  WorldState state;
  Observation observation;
  bool operator==(const EpisodeStep&) const = default;
};

struct Episode {
  WorldModel world;
  WorldState initial_state;
  std::vector<EpisodeStep> steps;
  std::string true_goal;
  std::uint64_t rng_seed = 0;
  /// Item locations the agent remembers from before the recording started.
  /// May disagree with initial_state (false beliefs). Empty = no knowledge.
  std::map<std::string, std::string> prior_knowledge;
  bool operator==(const Episode&) const = default;
};

/// Throws StructuralError if the state does not satisfy the WorldState
/// invariants for this world.
void validate_state(const WorldState& state, const WorldModel& world);

/// A fresh state: agent in `room`, hands empty, openable containers closed.
WorldState make_state(const WorldModel& world, const std::string& room,
                      std::map<std::string, std::string> placement);

std::vector<AgentAction> legal_actions(const WorldState& state, const WorldModel& world);

WorldState transition(const WorldState& state, const AgentAction& action, const WorldModel& world);

Observation observe(const WorldState& state, const WorldModel& world);

/// Locations whose full contents are visible in this state's room: open
/// containers and surfaces.
std::vector<std::string> inspected_locations(const WorldState& state, const WorldModel& world);

/// Items visible (and so grabbable) from the current room.
std::vector<std::string> visible_items(const WorldState& state, const WorldModel& world);

/// Checks the Episode invariants by replaying transition/observe from the
/// initial state. Throws StructuralError naming the first mismatching step.
void verify_episode(const Episode& episode);

/// Episode truncated to its first `steps` steps.
Episode episode_prefix(const Episode& episode, std::size_t steps);

}  // namespace bip
