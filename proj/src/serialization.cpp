// SPDX-License-Identifier: Apache-2.0
#include "bip/serialization.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace bip {

void to_json(json& j, const ContainerSpec& c) { j = json{{"id", c.id}, {"room", c.room}, {"openable", c.openable}}; }
void from_json(const json& j, ContainerSpec& c) {
  j.at("id").get_to(c.id);
  j.at("room").get_to(c.room);
  c.openable = j.value("openable", true);
}

void to_json(json& j, const SurfaceSpec& s) { j = json{{"id", s.id}, {"room", s.room}}; }
void from_json(const json& j, SurfaceSpec& s) {
  j.at("id").get_to(s.id);
  j.at("room").get_to(s.room);
}

void to_json(json& j, const WorldSpec& w) {
  json adj = json::array();
  for (const auto& [a, b] : w.adjacency) adj.push_back(json::array({a, b}));
  j = json{{"rooms", w.rooms},   {"adjacency", adj},         {"containers", w.containers},
           {"surfaces", w.surfaces}, {"items", w.items},     {"gamma", w.gamma},
           {"step_cost", w.step_cost}, {"goal_reward", w.goal_reward}};
}

void from_json(const json& j, WorldSpec& w) {
  j.at("rooms").get_to(w.rooms);
  w.adjacency.clear();
  for (const auto& e : j.at("adjacency")) {
    if (!e.is_array() || e.size() != 2) throw StructuralError("adjacency entries must be [room, room] pairs");
    w.adjacency.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  }
  j.at("containers").get_to(w.containers);
  j.at("surfaces").get_to(w.surfaces);
  j.at("items").get_to(w.items);
  w.gamma = j.value("gamma", 0.95);
  w.step_cost = j.value("step_cost", 1.0);
  w.goal_reward = j.value("goal_reward", 10.0);
}

void to_json(json& j, const WorldModel& w) { to_json(j, w.spec()); }

WorldModel world_from_json(const json& j) { return WorldModel(j.get<WorldSpec>()); }

void to_json(json& j, const WorldState& s) {
  j = json{{"agent_room", s.agent_room},
           {"agent_holding", s.agent_holding ? json(*s.agent_holding) : json(nullptr)},
           {"container_open", s.container_open},
           {"placement", s.placement}};
}

void from_json(const json& j, WorldState& s) {
  j.at("agent_room").get_to(s.agent_room);
  const auto& h = j.at("agent_holding");
  s.agent_holding = h.is_null() ? std::nullopt : std::optional<std::string>(h.get<std::string>());
  j.at("container_open").get_to(s.container_open);
  j.at("placement").get_to(s.placement);
}

void to_json(json& j, const AgentAction& a) {
  j = json{{"kind", kind_name(a.kind)}};
  if (a.kind != ActionKind::Stay) j["target"] = a.target;
}

void from_json(const json& j, AgentAction& a) {
  a.kind = parse_action_kind(j.at("kind").get<std::string>());
  if (a.kind == ActionKind::Stay) {
    if (j.contains("target")) throw StructuralError("Stay takes no target");
    a.target.clear();
  } else {
    j.at("target").get_to(a.target);
  }
}

void to_json(json& j, const Observation& o) {
  j = json{{"visible_rooms", o.visible_rooms},
           {"visible_container_states", o.visible_container_states},
           {"visible_placements", o.visible_placements}};
}

void from_json(const json& j, Observation& o) {
  j.at("visible_rooms").get_to(o.visible_rooms);
  j.at("visible_container_states").get_to(o.visible_container_states);
  j.at("visible_placements").get_to(o.visible_placements);
}

void to_json(json& j, const EpisodeStep& s) {
  j = json{{"action", s.action}, {"state", s.state}, {"observation", s.observation}};
}

void from_json(const json& j, EpisodeStep& s) {
  j.at("action").get_to(s.action);
  j.at("state").get_to(s.state);
  j.at("observation").get_to(s.observation);
}

void to_json(json& j, const Episode& e) {
  j = json{{"world", e.world},         {"initial_state", e.initial_state},
           {"steps", e.steps},         {"true_goal", e.true_goal},
           {"rng_seed", e.rng_seed},   {"prior_knowledge", e.prior_knowledge}};
}

Episode episode_from_json(const json& j) {
  Episode e{world_from_json(j.at("world")), j.at("initial_state").get<WorldState>(),
            j.at("steps").get<std::vector<EpisodeStep>>(), j.at("true_goal").get<std::string>(),
            j.at("rng_seed").get<std::uint64_t>(), {}};
  if (j.contains("prior_knowledge")) j.at("prior_knowledge").get_to(e.prior_knowledge);
  verify_episode(e);
  return e;
}

json episode_to_json_with_beliefs(const Episode& episode) {
  json j = episode;
  BeliefState b = init_belief(episode.world, episode.world.items(), episode.prior_knowledge);
  b = update_belief(b, observe(episode.initial_state, episode.world), episode.world);
  json beliefs = json::array({b});
  for (const auto& step : episode.steps) {
    b = update_belief(b, step.observation, episode.world);
    beliefs.push_back(b);
  }
  j["beliefs"] = std::move(beliefs);
  return j;
}

void to_json(json& j, const ItemBelief& b) { j = json{{"candidates", b.candidates}, {"weights", b.weights}}; }
void from_json(const json& j, ItemBelief& b) {
  j.at("candidates").get_to(b.candidates);
  j.at("weights").get_to(b.weights);
}

void to_json(json& j, const BeliefState& b) { j = b.per_item; }
void from_json(const json& j, BeliefState& b) {
  j.get_to(b.per_item);
  b.degenerate.clear();
}

void to_json(json& j, const BeliefHypothesis& h) {
  j = json{{"item", h.item}, {"asserted_location", h.asserted_location}, {"polarity", h.polarity}};
}
void from_json(const json& j, BeliefHypothesis& h) {
  j.at("item").get_to(h.item);
  j.at("asserted_location").get_to(h.asserted_location);
  j.at("polarity").get_to(h.polarity);
}

}  // namespace bip

namespace bip {

void to_json(json& j, const Hypothesis& h) {
  j = json{{"goal", h.goal}, {"prior_log", h.prior_log}};
  j["belief_hyp"] = h.belief_hyp ? json(*h.belief_hyp) : json(nullptr);
}
void from_json(const json& j, Hypothesis& h) {
  j.at("goal").get_to(h.goal);
  h.prior_log = j.value("prior_log", 0.0);
  h.belief_hyp.reset();
  if (j.contains("belief_hyp") && !j.at("belief_hyp").is_null()) h.belief_hyp = j.at("belief_hyp").get<BeliefHypothesis>();
}

void to_json(json& j, const Question& q) {
  j = json{{"id", q.id},
           {"qtype", qtype_name(q.qtype)},
           {"episode_prefix", q.episode_prefix},
           {"hypothesis_a", q.hypothesis_a},
           {"hypothesis_b", q.hypothesis_b},
           {"correct", q.correct == Label::A ? "a" : "b"}};
}

Question question_from_json(const json& j) {
  const auto correct = j.at("correct").get<std::string>();
  if (correct != "a" && correct != "b") throw StructuralError("correct must be \"a\" or \"b\"");
  Question q{j.at("id").get<std::string>(),
             episode_from_json(j.at("episode_prefix")),
             j.at("hypothesis_a").get<Hypothesis>(),
             j.at("hypothesis_b").get<Hypothesis>(),
             correct == "a" ? Label::A : Label::B,
             parse_qtype(j.at("qtype").get<std::string>())};
  validate_question(q);
  return q;
}

json suite_to_json(const std::vector<Question>& suite) {
  json arr = json::array();
  for (const auto& q : suite) arr.push_back(q);
  return arr;
}

std::vector<Question> suite_from_json(const json& j) {
  if (!j.is_array()) throw SuiteError("suite must be a JSON array of questions");
  std::vector<Question> out;
  out.reserve(j.size());
  std::set<std::string> ids;
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      out.push_back(question_from_json(j[i]));
    } catch (const std::exception& e) {
      throw SuiteError("question " + std::to_string(i) + ": " + e.what());
    }
    if (!ids.insert(out.back().id).second) throw SuiteError("duplicate question id " + out.back().id);
  }
  return out;
}

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

std::vector<Question> load_suite(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SuiteError(path + ": cannot open suite file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SuiteError(path + ":" + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
  try {
    return suite_from_json(j);
  } catch (const std::exception& e) {
    throw SuiteError(path + ": " + e.what());
  }
}

void save_suite(const std::string& path, const std::vector<Question>& suite) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StructuralError(path + ": cannot write suite file");
  out << suite_to_json(suite).dump(1) << '\n';
}

void to_json(json& j, const GenConfig& c) {
  json mix = json::object();
  for (const auto& [t, n] : c.qtype_mix) mix[qtype_name(t)] = n;
  j = json{{"rng_seed", c.rng_seed},
           {"n_questions", c.n_questions},
           {"qtype_mix", mix},
           {"world_size", {{"rooms", c.world_size.rooms}, {"containers", c.world_size.containers},
                           {"items", c.world_size.items}}},
           {"agent_temperature", c.agent_temperature},
           {"theme", c.theme},
           {"horizon", c.horizon}};
}

void from_json(const json& j, GenConfig& c) {
  GenConfig d = default_gen_config(j.value("rng_seed", std::uint64_t{0}));
  if (j.contains("qtype_mix")) {
    d.qtype_mix.clear();
    for (const auto& [name, n] : j.at("qtype_mix").items()) d.qtype_mix[parse_qtype(name)] = n.get<int>();
    int total = 0;
    for (const auto& [t, n] : d.qtype_mix) total += n;
    d.n_questions = total;
  }
  if (!j.contains("qtype_mix") && j.contains("n_questions")) {
    d.n_questions = j.at("n_questions").get<int>();
    d.qtype_mix = balanced_mix(d.n_questions);
  }
  d.n_questions = j.value("n_questions", d.n_questions);
  if (j.contains("world_size")) {
    const auto& w = j.at("world_size");
    d.world_size.rooms = w.value("rooms", d.world_size.rooms);
    d.world_size.containers = w.value("containers", d.world_size.containers);
    d.world_size.items = w.value("items", d.world_size.items);
  }
  d.agent_temperature = j.value("agent_temperature", d.agent_temperature);
  d.theme = j.value("theme", d.theme);
  d.horizon = j.value("horizon", d.horizon);
  c = std::move(d);
}

void to_json(json& j, const ThemeMap& t) {
  j = json{{"id", t.id}, {"rooms", t.rooms}, {"containers", t.containers}, {"surfaces", t.surfaces}, {"items", t.items}};
}
void from_json(const json& j, ThemeMap& t) {
  j.at("id").get_to(t.id);
  j.at("rooms").get_to(t.rooms);
  j.at("containers").get_to(t.containers);
  j.at("surfaces").get_to(t.surfaces);
  j.at("items").get_to(t.items);
}

}  // namespace bip
