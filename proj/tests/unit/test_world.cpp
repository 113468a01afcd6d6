#include <doctest.h>

#include <fstream>

#include "bip/serialization.hpp"
#include "bip/simulate.hpp"
#include "helpers.hpp"

using namespace bip;
using bip::testing::fixture_state;
using bip::testing::fixture_world;

TEST_CASE("legal actions in a minimal world") {
  WorldSpec spec;
  spec.rooms = {"a", "b"};
  spec.adjacency = {{"a", "b"}};
  spec.surfaces = {{"shelf", "b"}};
  spec.items = {"cup"};
  const WorldModel world(spec);
  const auto s = make_state(world, "a", {{"cup", "shelf"}});
  CHECK(legal_actions(s, world) == std::vector<AgentAction>{AgentAction::walk_to("b"), AgentAction::stay()});
}

TEST_CASE("legal actions with a closed cabinet") {
  WorldSpec spec;
  spec.rooms = {"kitchen", "livingroom"};
  spec.adjacency = {{"kitchen", "livingroom"}};
  spec.containers = {{"cabinet", "kitchen", true}};
  spec.items = {"apple"};
  const WorldModel world(spec);
  const auto s = make_state(world, "kitchen", {{"apple", "cabinet"}});
  CHECK(legal_actions(s, world) ==
        std::vector<AgentAction>{AgentAction::walk_to("livingroom"), AgentAction::open("cabinet"), AgentAction::stay()});
}

TEST_CASE("fixture world actions match hand enumeration") {
  const auto world = fixture_world();
  auto s = fixture_state(world);
  CHECK(legal_actions(s, world) ==
        std::vector<AgentAction>{AgentAction::walk_to("bedroom"), AgentAction::walk_to("kitchen"), AgentAction::stay()});
  s = transition(s, AgentAction::walk_to("kitchen"), world);
  CHECK(legal_actions(s, world) == std::vector<AgentAction>{AgentAction::walk_to("hallway"),
                                                            AgentAction::open("cabinet"), AgentAction::open("fridge"),
                                                            AgentAction::grab("mug"), AgentAction::stay()});
  s = transition(s, AgentAction::open("fridge"), world);
  CHECK(legal_actions(s, world) ==
        std::vector<AgentAction>{AgentAction::walk_to("hallway"), AgentAction::open("cabinet"),
                                 AgentAction::grab("apple"), AgentAction::grab("mug"), AgentAction::stay()});
  s = transition(s, AgentAction::grab("apple"), world);
  CHECK(legal_actions(s, world) ==
        std::vector<AgentAction>{AgentAction::walk_to("hallway"), AgentAction::open("cabinet"), AgentAction::stay()});
  CHECK(legal_actions(s, world) == legal_actions(s, world));
}

TEST_CASE("transition updates one field") {
  const auto world = fixture_world();
  const auto s = fixture_state(world);
  CHECK(transition(s, AgentAction::stay(), world) == s);
  auto moved = transition(s, AgentAction::walk_to("kitchen"), world);
  CHECK(moved.agent_room == "kitchen");
  moved.agent_room = "hallway";
  CHECK(moved == s);

  auto k = transition(s, AgentAction::walk_to("kitchen"), world);
  const auto opened = transition(k, AgentAction::open("fridge"), world);
  CHECK(opened.container_open.at("fridge"));
  const auto grabbed = transition(opened, AgentAction::grab("apple"), world);
  CHECK(grabbed.agent_holding == std::optional<std::string>("apple"));
  CHECK(grabbed.placement.count("apple") == 0);
}

TEST_CASE("illegal actions are rejected") {
  const auto world = fixture_world();
  const auto s = fixture_state(world);
  CHECK_THROWS_AS(transition(s, AgentAction::open("fridge"), world), PreconditionError);
  CHECK_THROWS_AS(transition(s, AgentAction::grab("mug"), world), PreconditionError);
  auto k = transition(s, AgentAction::walk_to("kitchen"), world);
  CHECK_THROWS_AS(transition(k, AgentAction::walk_to("bedroom"), world), PreconditionError);
  CHECK_THROWS_AS(transition(k, AgentAction::grab("apple"), world), PreconditionError);
}

TEST_CASE("observation visibility") {
  const auto world = fixture_world();
  auto s = transition(fixture_state(world), AgentAction::walk_to("kitchen"), world);
  auto o = observe(s, world);
  CHECK(o.visible_rooms == std::set<std::string>{"kitchen"});
  CHECK(o.visible_placements.count("apple") == 0);
  CHECK(o.visible_placements.at("mug") == "counter");
  CHECK(o.visible_container_states.at("fridge") == false);

  s = transition(s, AgentAction::open("fridge"), world);
  o = observe(s, world);
  CHECK(o.visible_placements.at("apple") == "fridge");

  const auto away = observe(fixture_state(world), world);
  CHECK(away.visible_container_states.count("fridge") == 0);
  CHECK(away.visible_placements.empty());
}

TEST_CASE("world invariants are enforced") {
  WorldSpec spec;
  spec.rooms = {"a", "b"};
  spec.surfaces = {{"s", "a"}};
  spec.items = {"x"};
  CHECK_THROWS_AS(WorldModel{spec}, StructuralError);  // disconnected
  spec.adjacency = {{"a", "b"}};
  CHECK_NOTHROW(WorldModel{spec});
  auto dup = spec;
  dup.items = {"a"};
  CHECK_THROWS_AS(WorldModel{dup}, StructuralError);
  auto orphan = spec;
  orphan.surfaces = {{"s", "nowhere"}};
  CHECK_THROWS_AS(WorldModel{orphan}, StructuralError);
  auto bad_gamma = spec;
  bad_gamma.gamma = 0.0;
  CHECK_THROWS_AS(WorldModel{bad_gamma}, StructuralError);
  bad_gamma.gamma = 1.5;
  CHECK_THROWS_AS(WorldModel{bad_gamma}, StructuralError);
}

TEST_CASE("state invariants are enforced") {
  const auto world = fixture_world();
  auto s = fixture_state(world);
  s.placement.erase("apple");
  CHECK_THROWS_AS(validate_state(s, world), StructuralError);
  s = fixture_state(world);
  s.agent_holding = "apple";
  CHECK_THROWS_AS(validate_state(s, world), StructuralError);
  s = fixture_state(world);
  s.container_open.erase("fridge");
  CHECK_THROWS_AS(validate_state(s, world), StructuralError);
  s = fixture_state(world);
  s.agent_room = "attic";
  CHECK_THROWS_AS(legal_actions(s, world), StructuralError);
}

TEST_CASE("episode replay and tamper detection") {
  const auto world = fixture_world();
  const auto ep = simulate_episode(world, "keys", fixture_state(world), 0.5, 30, 3);
  CHECK_NOTHROW(verify_episode(ep));
  auto tampered = ep;
  tampered.steps.back().state.agent_room = tampered.steps.back().state.agent_room == "kitchen" ? "bedroom" : "kitchen";
  CHECK_THROWS_AS(verify_episode(tampered), StructuralError);
  auto empty = ep;
  empty.steps.clear();
  CHECK_THROWS_AS(verify_episode(empty), StructuralError);
}

TEST_CASE("simulation is deterministic and stops at the goal") {
  const auto world = fixture_world();
  const auto a = simulate_episode(world, "apple", fixture_state(world), 0.5, 40, 11);
  const auto b = simulate_episode(world, "apple", fixture_state(world), 0.5, 40, 11);
  CHECK(a == b);
  CHECK(json(a).dump() == json(b).dump());
  if (a.steps.back().state.agent_holding == std::optional<std::string>("apple")) {
    for (std::size_t i = 0; i + 1 < a.steps.size(); ++i) CHECK(a.steps[i].state.agent_holding != "apple");
  }
}

TEST_CASE("greedy agent walks the shortest path then grabs") {
  const auto world = fixture_world();
  // Agent already knows where the mug is.
  SimulationOptions opts;
  opts.prior_knowledge = {{"mug", "counter"}};
  const auto ep = simulate_episode(world, "mug", fixture_state(world), 1e-9, 10, 1, opts);
  REQUIRE(ep.steps.size() == 2);
  CHECK(ep.steps[0].action == AgentAction::walk_to("kitchen"));
  CHECK(ep.steps[1].action == AgentAction::grab("mug"));
}

TEST_CASE("agent holding its goal only stays") {
  const auto world = fixture_world();
  auto s = transition(fixture_state(world), AgentAction::walk_to("kitchen"), world);
  s = transition(s, AgentAction::grab("mug"), world);
  const auto ep = simulate_episode(world, "mug", s, 0.5, 10, 1);
  REQUIRE(ep.steps.size() == 1);
  CHECK(ep.steps[0].action == AgentAction::stay());
}

TEST_CASE("golden fixture episode for seed 42") {
  const auto world = fixture_world();
  const auto ep = simulate_episode(world, "keys", fixture_state(world), 0.5, 40, 42);
  const std::string path = std::string(BIP_FIXTURE_DIR) + "/golden_episode_seed42.json";
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), "missing " << path);
  const auto stored = json::parse(in);
  CHECK(json(ep) == stored);
  const auto replayed = stored.get<Episode>();
  CHECK(replayed == ep);
}

TEST_CASE("fingerprint depends on content only") {
  CHECK(fixture_world().fingerprint() == fixture_world().fingerprint());
  auto spec = fixture_world().spec();
  spec.goal_reward = 11.0;
  CHECK(WorldModel(spec).fingerprint() != fixture_world().fingerprint());
}
