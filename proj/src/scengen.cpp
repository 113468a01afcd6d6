// SPDX-License-Identifier: Apache-2.0
#include "bip/scengen.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "bip/belief.hpp"
#include "bip/builtin_data.hpp"
#include "bip/planner.hpp"
#include "bip/serialization.hpp"
#include "bip/simulate.hpp"

namespace bip {
namespace {

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[static_cast<std::size_t>(rng.below(v.size()))];
}

std::vector<std::string> sample(const std::vector<std::string>& pool, int n, Rng& rng) {
  std::vector<std::string> v = pool;
  for (int i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng.below(v.size() - static_cast<std::size_t>(i)));
    std::swap(v[static_cast<std::size_t>(i)], v[j]);
  }
  v.resize(static_cast<std::size_t>(n));
  return v;
}

QuestionOutcome regenerate(std::string reason) { return {std::nullopt, std::move(reason)}; }

// The recorded trajectory plus the agent's tracked belief after each
// observation; index 0 is the initial state.
struct Trajectory {
  Episode episode;
  std::vector<WorldState> states;
  std::vector<Observation> observations;
  std::vector<BeliefState> beliefs;

  std::size_t length() const { return episode.steps.size(); }
  bool ends_with_goal() const {
    return !episode.steps.empty() && episode.steps.back().state.agent_holding == episode.true_goal &&
           episode.initial_state.agent_holding != episode.true_goal;
  }
};

class Builder {
 public:
  Builder(const WorldModel& world, const WorldState& s0, double temperature, std::uint64_t seed, int horizon)
      : world_(world), s0_(s0), temperature_(temperature), seed_(seed), horizon_(horizon), rng_(seed) {}

  QuestionOutcome build(QuestionType t) {
    switch (t) {
      case QuestionType::T1_1: return true_belief();
      case QuestionType::T1_2: return false_belief();
      case QuestionType::T1_3: return long_term_belief();
      case QuestionType::T2_1: return goal_true_belief();
      case QuestionType::T2_2: return goal_false_belief();
      case QuestionType::T2_3: return goal_belief_update();
      case QuestionType::T2_4: return future_actions();
    }
    return regenerate("unknown type");
  }

 private:
  Trajectory simulate(const std::string& goal, std::map<std::string, std::string> prior) {
    SimulationOptions opts{std::move(prior), &cache_};
    Trajectory tr{simulate_episode(world_, goal, s0_, temperature_, horizon_, derive_seed(seed_, 7), opts), {}, {}, {}};
    const auto& ep = tr.episode;
    tr.states.push_back(ep.initial_state);
    tr.observations.push_back(observe(ep.initial_state, world_));
    BeliefState b = init_belief(world_, world_.items(), ep.prior_knowledge);
    tr.beliefs.push_back(update_belief(b, tr.observations[0], world_));
    for (const auto& step : ep.steps) {
      tr.states.push_back(step.state);
      tr.observations.push_back(step.observation);
      tr.beliefs.push_back(update_belief(tr.beliefs.back(), step.observation, world_));
    }
    return tr;
  }

  std::map<std::string, std::string> full_knowledge() const { return s0_.placement; }

  const std::string& room_of_item(const std::string& item) const {
    return world_.host_room(s0_.placement.at(item));
  }

  Question make(const Trajectory& tr, std::size_t cut, QuestionType t, Hypothesis right, Hypothesis wrong) {
    Question q{"", episode_prefix(tr.episode, cut), {}, {}, Label::A, t};
    if (rng_.bernoulli(0.5)) {
      q.hypothesis_a = std::move(right);
      q.hypothesis_b = std::move(wrong);
      q.correct = Label::A;
    } else {
      q.hypothesis_a = std::move(wrong);
      q.hypothesis_b = std::move(right);
      q.correct = Label::B;
    }
    return q;
  }

  static Hypothesis belief_hyp(const std::string& goal, const std::string& item, const std::string& loc, bool in) {
    return Hypothesis{goal, BeliefHypothesis{item, loc, in}, 0.0};
  }

  // Another item located outside `avoid_rooms`, preferably in `prefer_room`.
  std::optional<std::string> decoy_item(const std::string& goal, const std::set<std::string>& avoid_rooms,
                                        const std::string& prefer_room = "") {
    std::vector<std::string> preferred, acceptable;
    for (const auto& item : world_.items()) {
      if (item == goal || s0_.agent_holding == item) continue;
      const auto& room = room_of_item(item);
      if (avoid_rooms.count(room)) continue;
      acceptable.push_back(item);
      if (room == prefer_room) preferred.push_back(item);
    }
    if (!preferred.empty()) return pick(preferred, rng_);
    if (!acceptable.empty()) return pick(acceptable, rng_);
    return std::nullopt;
  }

  std::optional<std::string> random_goal() {
    std::vector<std::string> v;
    for (const auto& item : world_.items()) {
      if (s0_.agent_holding != item) v.push_back(item);
    }
    if (v.empty()) return std::nullopt;
    return pick(v, rng_);
  }

  bool goal_visible_initially(const std::string& goal) const {
    return observe(s0_, world_).visible_placements.count(goal) > 0;
  }

  // 1.1: the agent has seen item x at its true location L.
  QuestionOutcome true_belief() {
    auto goal = random_goal();
    if (!goal) return regenerate("no goal item");
    auto tr = simulate(*goal, {});
    struct Cand {
      std::size_t cut;
      std::string item;
    };
    std::vector<Cand> cands;
    std::set<std::string> seen;
    for (std::size_t n = 0; n <= tr.length(); ++n) {
      for (const auto& [item, loc] : tr.observations[n].visible_placements) seen.insert(item);
      if (n == 0) continue;
      for (const auto& item : seen) {
        if (tr.states[n].agent_holding == item) continue;
        if (tr.beliefs[n].mass(item, tr.states[n].placement.at(item)) == 1.0) cands.push_back({n, item});
      }
    }
    if (cands.empty()) return regenerate("agent never saw an item");
    const auto c = pick(cands, rng_);
    const auto& loc = tr.states[c.cut].placement.at(c.item);
    std::vector<std::string> decoys;
    for (const auto& l : world_.locations()) {
      if (l != loc) decoys.push_back(l);
    }
    if (decoys.empty()) return regenerate("single location world");
    const auto decoy = pick(decoys, rng_);
    return {make(tr, c.cut, QuestionType::T1_1, belief_hyp(*goal, c.item, loc, true),
                 belief_hyp(*goal, c.item, decoy, true)),
            ""};
  }

  // 1.2: the agent remembers x at L, but x was moved to M before the
  // recording began; cut while neither has been checked.
  QuestionOutcome false_belief() {
    if (world_.locations().size() < 2) return regenerate("needs two locations");
    const auto& item = pick(world_.items(), rng_);
    if (s0_.agent_holding == item) return regenerate("item is held");
    const auto& actual = s0_.placement.at(item);
    std::vector<std::string> others;
    for (const auto& l : world_.locations()) {
      if (l != actual) others.push_back(l);
    }
    const auto remembered = pick(others, rng_);
    const std::string goal = rng_.bernoulli(0.5) ? item : *random_goal();
    auto tr = simulate(goal, {{item, remembered}});
    std::vector<std::size_t> cuts;
    for (std::size_t n = 1; n <= tr.length(); ++n) {
      if (tr.beliefs[n].mass(item, remembered) != 1.0 || tr.beliefs[n].degenerate.count(item)) break;
      cuts.push_back(n);
    }
    if (cuts.empty()) return regenerate("false belief exposed immediately");
    const auto cut = pick(cuts, rng_);
    return {make(tr, cut, QuestionType::T1_2, belief_hyp(goal, item, remembered, true),
                 belief_hyp(goal, item, actual, true)),
            ""};
  }

  // 1.3: an assertion about location L last inspected at least 5 steps
  // before the cut.
  QuestionOutcome long_term_belief() {
    auto goal = random_goal();
    if (!goal) return regenerate("no goal item");
    auto tr = simulate(*goal, {});
    struct Cand {
      std::size_t cut;
      std::string item;
      std::string loc;
      bool in;
    };
    std::vector<Cand> cands[2];
    std::map<std::string, std::size_t> last_inspected;
    for (std::size_t n = 0; n <= tr.length(); ++n) {
      for (const auto& l : inspected_locations(tr.states[n], world_)) last_inspected[l] = n;
      if (n == 0) continue;
      for (const auto& [loc, when] : last_inspected) {
        if (n - when < 5) continue;
        for (const auto& item : world_.items()) {
          if (tr.states[n].agent_holding == item) continue;
          const double m = tr.beliefs[n].mass(item, loc);
          if (m == 1.0) cands[1].push_back({n, item, loc, true});
          else if (m == 0.0) cands[0].push_back({n, item, loc, false});
        }
      }
    }
    const bool want_in = rng_.bernoulli(0.5);
    const auto& pool = !cands[want_in].empty() ? cands[want_in] : cands[!want_in];
    if (pool.empty()) return regenerate("no location left unvisited for 5 steps");
    const auto c = pick(pool, rng_);
    return {make(tr, c.cut, QuestionType::T1_3, belief_hyp(*goal, c.item, c.loc, c.in),
                 belief_hyp(*goal, c.item, c.loc, !c.in)),
            ""};
  }

  static Hypothesis goal_hyp(const std::string& g) { return Hypothesis{g, std::nullopt, 0.0}; }

  // Goal questions need at least two observed actions, not all Stay.
  static bool idle_prefix(const Trajectory& tr, std::size_t cut) {
    if (cut < 2) return true;
    for (std::size_t i = 0; i < cut; ++i) {
      if (tr.episode.steps[i].action.kind != ActionKind::Stay) return false;
    }
    return true;
  }

  std::size_t last_cut(const Trajectory& tr) const { return tr.ends_with_goal() ? tr.length() - 1 : tr.length(); }

  // 2.1: the agent knows where everything is and heads for its goal.
  QuestionOutcome goal_true_belief() {
    auto goal = random_goal();
    if (!goal || goal_visible_initially(*goal)) return regenerate("goal visible at start");
    auto tr = simulate(*goal, full_knowledge());
    if (!tr.ends_with_goal() || tr.length() < 3) return regenerate("episode too short");
    const auto n = tr.length();
    const auto cut = static_cast<std::size_t>(rng_.between(static_cast<int>((n + 1) / 2), static_cast<int>(n - 1)));
    auto decoy = decoy_item(*goal, {room_of_item(*goal)});
    if (!decoy) return regenerate("no decoy");
    if (idle_prefix(tr, cut)) return regenerate("prefix has no goal-directed action");
    return {make(tr, cut, QuestionType::T2_1, goal_hyp(*goal), goal_hyp(*decoy)), ""};
  }

  // 2.2: the agent wrongly remembers its goal at L and heads there; the
  // decoy sits near the goal's true location.
  QuestionOutcome goal_false_belief() {
    auto goal = random_goal();
    if (!goal || goal_visible_initially(*goal)) return regenerate("goal visible at start");
    const auto& actual = s0_.placement.at(*goal);
    std::vector<std::string> elsewhere;
    for (const auto& l : world_.locations()) {
      const auto& room = world_.host_room(l);
      if (room != world_.host_room(actual) && room != s0_.agent_room) elsewhere.push_back(l);
    }
    if (elsewhere.empty()) return regenerate("needs a remembered location in another room");
    const auto remembered = pick(elsewhere, rng_);
    auto prior = full_knowledge();
    prior[*goal] = remembered;
    auto tr = simulate(*goal, prior);
    // Action n is chosen under the belief held after observation n-1, so
    // the step that reveals the mistake still acts on the false belief.
    std::size_t valid = 0;
    for (std::size_t n = 1; n <= last_cut(tr); ++n) {
      if (tr.beliefs[n - 1].mass(*goal, remembered) != 1.0 || tr.beliefs[n - 1].degenerate.count(*goal)) break;
      valid = n;
    }
    if (valid < 2) return regenerate("false belief exposed too early");
    const auto cut = static_cast<std::size_t>(rng_.between(static_cast<int>((valid + 1) / 2), static_cast<int>(valid)));
    auto decoy = decoy_item(*goal, {world_.host_room(remembered)}, world_.host_room(actual));
    if (!decoy) return regenerate("no decoy");
    if (idle_prefix(tr, cut)) return regenerate("prefix has no goal-directed action");
    return {make(tr, cut, QuestionType::T2_2, goal_hyp(*goal), goal_hyp(*decoy)), ""};
  }

  // 2.3: the agent does not know where its goal is, opens a container that
  // turns out not to hold it, and moves on.
  QuestionOutcome goal_belief_update() {
    auto goal = random_goal();
    if (!goal || goal_visible_initially(*goal)) return regenerate("goal visible at start");
    auto prior = full_knowledge();
    prior.erase(*goal);
    auto tr = simulate(*goal, prior);
    std::optional<std::size_t> failed;
    std::string opened;
    for (std::size_t i = 0; i < tr.length(); ++i) {
      const auto& step = tr.episode.steps[i];
      if (step.action.kind == ActionKind::Open && tr.states[i + 1].placement.at(*goal) != step.action.target) {
        failed = i + 1;
        opened = step.action.target;
        break;
      }
    }
    if (!failed) return regenerate("no failed search");
    const auto last = last_cut(tr);
    if (*failed + 1 > last) return regenerate("no step after the failed search");
    const auto cut = static_cast<std::size_t>(rng_.between(static_cast<int>(*failed + 1), static_cast<int>(last)));
    auto decoy = decoy_item(*goal, {world_.host_room(opened)});
    if (!decoy) return regenerate("no decoy");
    if (idle_prefix(tr, cut)) return regenerate("prefix has no goal-directed action");
    return {make(tr, cut, QuestionType::T2_3, goal_hyp(*goal), goal_hyp(*decoy)), ""};
  }

  // 2.4: early truncation; which goal is the agent working toward?
  QuestionOutcome future_actions() {
    auto goal = random_goal();
    if (!goal || goal_visible_initially(*goal)) return regenerate("goal visible at start");
    auto tr = simulate(*goal, full_knowledge());
    if (!tr.ends_with_goal() || tr.length() < 3) return regenerate("episode too short");
    const int n = static_cast<int>(tr.length());
    const int lo = std::max(2, (n + 2) / 3);
    const auto cut = static_cast<std::size_t>(rng_.between(lo, std::max(lo, n - 2)));
    auto decoy = decoy_item(*goal, {room_of_item(*goal)});
    if (!decoy) return regenerate("no decoy");
    if (idle_prefix(tr, cut)) return regenerate("prefix has no goal-directed action");
    return {make(tr, cut, QuestionType::T2_4, goal_hyp(*goal), goal_hyp(*decoy)), ""};
  }

  const WorldModel& world_;
  const WorldState& s0_;
  double temperature_;
  std::uint64_t seed_;
  int horizon_;
  Rng rng_;
  PlanCache cache_;
};

// Renames ids through a theme, failing loudly on anything uncovered.
class Renamer {
 public:
  explicit Renamer(const ThemeMap& t) : t_(t) {}

  std::string room(const std::string& id) const { return look(t_.rooms, id, "room"); }
  std::string container(const std::string& id) const { return look(t_.containers, id, "container"); }
  std::string surface(const std::string& id) const { return look(t_.surfaces, id, "surface"); }
  std::string item(const std::string& id) const { return look(t_.items, id, "item"); }
  std::string location(const WorldModel& w, const std::string& id) const {
    return w.is_container(id) ? container(id) : surface(id);
  }

  WorldModel world(const WorldModel& w) const {
    const auto& s = w.spec();
    WorldSpec out;
    out.gamma = s.gamma;
    out.step_cost = s.step_cost;
    out.goal_reward = s.goal_reward;
    for (const auto& r : s.rooms) out.rooms.push_back(room(r));
    for (const auto& [a, b] : s.adjacency) out.adjacency.emplace_back(room(a), room(b));
    for (const auto& c : s.containers) out.containers.push_back({container(c.id), room(c.room), c.openable});
    for (const auto& f : s.surfaces) out.surfaces.push_back({surface(f.id), room(f.room)});
    for (const auto& i : s.items) out.items.push_back(item(i));
    return WorldModel(std::move(out));
  }

  WorldState state(const WorldModel& w, const WorldState& s) const {
    WorldState out;
    out.agent_room = room(s.agent_room);
    if (s.agent_holding) out.agent_holding = item(*s.agent_holding);
    for (const auto& [c, open] : s.container_open) out.container_open[container(c)] = open;
    for (const auto& [i, l] : s.placement) out.placement[item(i)] = location(w, l);
    return out;
  }

  Observation observation(const WorldModel& w, const Observation& o) const {
    Observation out;
    for (const auto& r : o.visible_rooms) out.visible_rooms.insert(room(r));
    for (const auto& [c, open] : o.visible_container_states) out.visible_container_states[container(c)] = open;
    for (const auto& [i, l] : o.visible_placements) out.visible_placements[item(i)] = location(w, l);
    return out;
  }

  AgentAction action(const AgentAction& a) const {
    switch (a.kind) {
      case ActionKind::WalkTo: return AgentAction::walk_to(room(a.target));
      case ActionKind::Open: return AgentAction::open(container(a.target));
      case ActionKind::Grab: return AgentAction::grab(item(a.target));
      case ActionKind::Stay: return AgentAction::stay();
    }
    return a;
  }

  Hypothesis hypothesis(const WorldModel& w, const Hypothesis& h) const {
    Hypothesis out{item(h.goal), std::nullopt, h.prior_log};
    if (h.belief_hyp) {
      out.belief_hyp = BeliefHypothesis{item(h.belief_hyp->item), location(w, h.belief_hyp->asserted_location),
                                        h.belief_hyp->polarity};
    }
    return out;
  }

  Episode episode(const Episode& e) const {
    const auto& w = e.world;
    Episode out{world(w), state(w, e.initial_state), {}, item(e.true_goal), e.rng_seed, {}};
    for (const auto& step : e.steps) {
      out.steps.push_back({action(step.action), state(w, step.state), observation(w, step.observation)});
    }
    for (const auto& [i, l] : e.prior_knowledge) out.prior_knowledge[item(i)] = location(w, l);
    return out;
  }

 private:
  std::string look(const std::map<std::string, std::string>& m, const std::string& id, const char* kind) const {
    auto it = m.find(id);
    if (it == m.end()) throw StructuralError("theme " + t_.id + " does not cover " + kind + " " + id);
    return it->second;
  }

  const ThemeMap& t_;
};

}  // namespace

std::map<QuestionType, int> balanced_mix(int n_questions) {
  if (n_questions < 0) throw StructuralError("n_questions must be non-negative");
  std::map<QuestionType, int> mix;
  const int belief = (n_questions + 1) / 2;
  const int goal = n_questions - belief;
  const QuestionType btypes[] = {QuestionType::T1_1, QuestionType::T1_2, QuestionType::T1_3};
  const QuestionType gtypes[] = {QuestionType::T2_1, QuestionType::T2_2, QuestionType::T2_3, QuestionType::T2_4};
  for (int i = 0; i < 3; ++i) mix[btypes[i]] = belief / 3 + (i < belief % 3 ? 1 : 0);
  for (int i = 0; i < 4; ++i) mix[gtypes[i]] = goal / 4 + (i < goal % 4 ? 1 : 0);
  return mix;
}

GenConfig default_gen_config(std::uint64_t seed) {
  GenConfig c;
  c.rng_seed = seed;
  c.n_questions = 200;
  c.qtype_mix = balanced_mix(200);
  return c;
}

const Vocabulary& apartment_vocabulary() {
  static const Vocabulary v{
      {"bathroom", "bedroom", "dining_room", "garage", "hallway", "kitchen", "living_room", "office"},
      {"cabinet", "closet", "cupboard", "dishwasher", "drawer", "fridge", "microwave", "wardrobe"},
      {"bench", "coffee_table", "counter", "desk", "nightstand", "shelf", "sofa", "table"},
      {"apple", "book", "cupcake", "glasses", "keys", "mug", "phone", "plate", "remote", "wallet"},
  };
  return v;
}

void validate_gen_config(const GenConfig& c) {
  const auto& v = apartment_vocabulary();
  const auto& b = c.world_size;
  if (b.rooms < 1 || b.containers < 1 || b.items < 1) throw StructuralError("world_size bounds must be >= 1");
  if (b.rooms > static_cast<int>(v.rooms.size()) || b.containers > static_cast<int>(v.containers.size()) ||
      b.items > static_cast<int>(v.items.size()))
    throw StructuralError("world_size bounds exceed the vocabulary");
  if (!(c.agent_temperature > 0.0)) throw StructuralError("agent_temperature must be positive");
  if (c.horizon < 1) throw StructuralError("horizon must be >= 1");
  int total = 0;
  for (const auto& [t, n] : c.qtype_mix) {
    if (n < 0) throw StructuralError("negative count for type " + qtype_name(t));
    total += n;
  }
  if (total != c.n_questions) throw StructuralError("qtype_mix counts do not sum to n_questions");
}

GeneratedWorld generate_world(const WorldBounds& bounds, std::uint64_t seed) {
  const auto& v = apartment_vocabulary();
  if (bounds.rooms < 1 || bounds.containers < 1 || bounds.items < 1 ||
      bounds.rooms > static_cast<int>(v.rooms.size()) || bounds.containers > static_cast<int>(v.containers.size()) ||
      bounds.items > static_cast<int>(v.items.size()))
    throw StructuralError("unsatisfiable world bounds");
  Rng rng(seed);
  auto draw = [&](int max) { return rng.between((max + 1) / 2, max); };
  const int nr = draw(bounds.rooms);
  const int nc = draw(bounds.containers);
  const int ni = draw(bounds.items);

  WorldSpec spec;
  const auto rooms = sample(v.rooms, nr, rng);
  const auto surfaces = sample(v.surfaces, nr, rng);
  std::set<std::pair<std::string, std::string>> edges;
  auto connect = [&](const std::string& a, const std::string& b) { edges.insert(std::minmax(a, b)); };
  for (std::size_t i = 1; i < rooms.size(); ++i) connect(rooms[i], rooms[static_cast<std::size_t>(rng.below(i))]);
  for (std::size_t i = 0; i < rooms.size(); ++i) {
    for (std::size_t j = i + 1; j < rooms.size(); ++j) {
      if (!edges.count(std::minmax(rooms[i], rooms[j])) && rng.bernoulli(0.25)) connect(rooms[i], rooms[j]);
    }
  }
  spec.rooms = rooms;
  std::sort(spec.rooms.begin(), spec.rooms.end());
  spec.adjacency.assign(edges.begin(), edges.end());
  for (std::size_t i = 0; i < rooms.size(); ++i) spec.surfaces.push_back({surfaces[i], rooms[i]});
  for (const auto& c : sample(v.containers, nc, rng)) spec.containers.push_back({c, pick(rooms, rng), true});
  std::sort(spec.containers.begin(), spec.containers.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(spec.surfaces.begin(), spec.surfaces.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  spec.items = sample(v.items, ni, rng);
  std::sort(spec.items.begin(), spec.items.end());

  WorldModel world(std::move(spec));
  std::map<std::string, std::string> placement;
  for (const auto& item : world.items()) placement[item] = pick(world.locations(), rng);
  auto state = make_state(world, pick(world.rooms(), rng), std::move(placement));
  return {std::move(world), std::move(state)};
}

QuestionOutcome generate_question(const WorldModel& world, const WorldState& initial_state, QuestionType qtype,
                                  double temperature, std::uint64_t seed, int horizon) {
  if (!(temperature > 0.0)) throw PreconditionError("generate_question: temperature must be positive");
  validate_state(initial_state, world);
  return Builder(world, initial_state, temperature, seed, horizon).build(qtype);
}

std::vector<Question> generate_suite(const GenConfig& config) {
  validate_gen_config(config);
  const ThemeMap theme = find_theme(config.theme);
  std::vector<Question> suite;
  std::uint64_t index = 0;
  for (auto t : kAllQuestionTypes) {
    auto it = config.qtype_mix.find(t);
    const int count = it == config.qtype_mix.end() ? 0 : it->second;
    for (int c = 0; c < count; ++c, ++index) {
      std::string last_reason;
      bool done = false;
      for (int attempt = 0; attempt < kMaxRegenerations && !done; ++attempt) {
        const auto s = derive_seed(derive_seed(config.rng_seed, index), static_cast<std::uint64_t>(attempt));
        auto gw = generate_world(config.world_size, derive_seed(s, 0));
        auto out = generate_question(gw.world, gw.state, t, config.agent_temperature, derive_seed(s, 1), config.horizon);
        if (out.question) {
          char id[32];
          std::snprintf(id, sizeof id, "q%04llu", static_cast<unsigned long long>(index));
          out.question->id = id;
          suite.push_back(std::move(*out.question));
          done = true;
        } else {
          last_reason = out.regenerate_reason;
        }
      }
      if (!done) {
        throw GenerationError("could not generate a type " + qtype_name(t) + " question after " +
                              std::to_string(kMaxRegenerations) + " attempts (" + last_reason + ")");
      }
    }
  }
  return config.theme == "apartment" ? suite : retheme(suite, theme);
}

void validate_theme(const ThemeMap& theme) {
  std::set<std::string> image;
  for (const auto* m : {&theme.rooms, &theme.containers, &theme.surfaces, &theme.items}) {
    for (const auto& [from, to] : *m) {
      if (!image.insert(to).second) throw StructuralError("theme " + theme.id + " maps two ids to " + to);
    }
  }
}

ThemeMap invert(const ThemeMap& theme) {
  validate_theme(theme);
  const std::string suffix = "-inverse";
  const bool inverted = theme.id.size() > suffix.size() && theme.id.ends_with(suffix);
  ThemeMap out{inverted ? theme.id.substr(0, theme.id.size() - suffix.size()) : theme.id + suffix, {}, {}, {}, {}};
  for (const auto& [a, b] : theme.rooms) out.rooms[b] = a;
  for (const auto& [a, b] : theme.containers) out.containers[b] = a;
  for (const auto& [a, b] : theme.surfaces) out.surfaces[b] = a;
  for (const auto& [a, b] : theme.items) out.items[b] = a;
  return out;
}

ThemeMap identity_theme(const std::string& id) {
  const auto& v = apartment_vocabulary();
  ThemeMap t{id, {}, {}, {}, {}};
  for (const auto& x : v.rooms) t.rooms[x] = x;
  for (const auto& x : v.containers) t.containers[x] = x;
  for (const auto& x : v.surfaces) t.surfaces[x] = x;
  for (const auto& x : v.items) t.items[x] = x;
  return t;
}

std::vector<ThemeMap> builtin_themes() {
  std::vector<ThemeMap> out;
  for (auto text : builtin::theme_json()) {
    auto t = json::parse(text).get<ThemeMap>();
    validate_theme(t);
    out.push_back(std::move(t));
  }
  return out;
}

ThemeMap find_theme(const std::string& id) {
  if (id == "apartment") return identity_theme();
  for (auto& t : builtin_themes()) {
    if (t.id == id) return t;
  }
  throw StructuralError("unknown theme: " + id);
}

bool preserves_order(const ThemeMap& theme, const Vocabulary& source) {
  auto monotone = [&](std::vector<std::pair<std::string, std::string>> pairs) {
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t i = 1; i < pairs.size(); ++i) {
      if (!(pairs[i - 1].second < pairs[i].second)) return false;
    }
    return true;
  };
  auto mapped = [](const std::vector<std::string>& ids, const std::map<std::string, std::string>& m, bool& ok) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& id : ids) {
      auto it = m.find(id);
      if (it == m.end()) ok = false;
      else out.emplace_back(id, it->second);
    }
    return out;
  };
  bool ok = true;
  auto rooms = mapped(source.rooms, theme.rooms, ok);
  auto items = mapped(source.items, theme.items, ok);
  auto locs = mapped(source.containers, theme.containers, ok);
  auto surf = mapped(source.surfaces, theme.surfaces, ok);
  locs.insert(locs.end(), surf.begin(), surf.end());
  return ok && monotone(rooms) && monotone(items) && monotone(locs);
}

Question retheme(const Question& q, const ThemeMap& theme) {
  const Renamer r(theme);
  const auto& w = q.episode_prefix.world;
  return Question{q.id, r.episode(q.episode_prefix), r.hypothesis(w, q.hypothesis_a), r.hypothesis(w, q.hypothesis_b),
                  q.correct, q.qtype};
}

std::vector<Question> retheme(const std::vector<Question>& suite, const ThemeMap& theme) {
  validate_theme(theme);
  std::vector<Question> out;
  out.reserve(suite.size());
  for (const auto& q : suite) out.push_back(retheme(q, theme));
  return out;
}

}  // namespace bip
