// Shared fixtures for the unit tests.
#pragma once

#include <functional>
#include <string>

#include "bip/policy.hpp"
#include "bip/world.hpp"

namespace bip::testing {

// Three rooms in a line: kitchen - hallway - bedroom.
inline WorldModel fixture_world() {
  WorldSpec spec;
  spec.rooms = {"bedroom", "hallway", "kitchen"};
  spec.adjacency = {{"hallway", "kitchen"}, {"bedroom", "hallway"}};
  spec.containers = {{"cabinet", "kitchen", true}, {"fridge", "kitchen", true}, {"wardrobe", "bedroom", true}};
  spec.surfaces = {{"counter", "kitchen"}, {"table", "hallway"}, {"nightstand", "bedroom"}};
  spec.items = {"apple", "keys", "mug"};
  return WorldModel(spec);
}

inline WorldState fixture_state(const WorldModel& world) {
  return make_state(world, "hallway", {{"apple", "fridge"}, {"keys", "nightstand"}, {"mug", "counter"}});
}

// Policy defined by a plain function of the query.
class FunctionPolicy final : public PolicyModel {
 public:
  using Fn = std::function<std::vector<double>(const PolicyQuery&)>;
  explicit FunctionPolicy(Fn fn, std::string name = "function") : fn_(std::move(fn)), name_(std::move(name)) {}
  PolicyOutput score(const PolicyQuery& q, const WorldModel&) const override { return {{fn_(q)}, std::nullopt}; }
  std::string descriptor() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

inline std::vector<double> uniform(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

}  // namespace bip::testing
