// SPDX-License-Identifier: Apache-2.0
//
// JSON forms of the domain types. Field names follow the type fields
// exactly; see schemas/*.schema.json.
#pragma once

#include <string>

#include <json.hpp>

#include "bip/belief.hpp"
#include "bip/inference.hpp"
#include "bip/scengen.hpp"
#include "bip/world.hpp"

namespace bip {

using json = nlohmann::json;

void to_json(json& j, const ContainerSpec& c);
void from_json(const json& j, ContainerSpec& c);
void to_json(json& j, const SurfaceSpec& s);
void from_json(const json& j, SurfaceSpec& s);
void to_json(json& j, const WorldSpec& w);
void from_json(const json& j, WorldSpec& w);
void to_json(json& j, const WorldModel& w);
void to_json(json& j, const WorldState& s);
void from_json(const json& j, WorldState& s);
void to_json(json& j, const AgentAction& a);
void from_json(const json& j, AgentAction& a);
void to_json(json& j, const Observation& o);
void from_json(const json& j, Observation& o);
void to_json(json& j, const EpisodeStep& s);
void from_json(const json& j, EpisodeStep& s);
void to_json(json& j, const Episode& e);
void to_json(json& j, const ItemBelief& b);
void from_json(const json& j, ItemBelief& b);
void to_json(json& j, const BeliefState& b);
void from_json(const json& j, BeliefState& b);
void to_json(json& j, const BeliefHypothesis& h);
void from_json(const json& j, BeliefHypothesis& h);

WorldModel world_from_json(const json& j);
/// Parses and validates (verify_episode) an episode.
Episode episode_from_json(const json& j);

/// Episode JSON with the optional per-step `beliefs` array: the tracked
/// belief after the initial observation followed by one entry per step.
json episode_to_json_with_beliefs(const Episode& episode);

void to_json(json& j, const Hypothesis& h);
void from_json(const json& j, Hypothesis& h);
void to_json(json& j, const Question& q);
/// Parses and validates (validate_question) a question.
Question question_from_json(const json& j);

/// Suite files are a JSON array of questions.
json suite_to_json(const std::vector<Question>& suite);
std::vector<Question> suite_from_json(const json& j);

class SuiteError : public StructuralError {
 public:
  using StructuralError::StructuralError;
};

/// Throws SuiteError with the file name and the line or question at fault.
std::vector<Question> load_suite(const std::string& path);
void save_suite(const std::string& path, const std::vector<Question>& suite);

void to_json(json& j, const GenConfig& c);
void from_json(const json& j, GenConfig& c);
void to_json(json& j, const ThemeMap& t);
void from_json(const json& j, ThemeMap& t);

/// Line number (1-based) of a byte offset within text.
std::size_t line_of_offset(const std::string& text, std::size_t offset);

}  // namespace bip

namespace nlohmann {
template <>
struct adl_serializer<bip::WorldModel> {
  static bip::WorldModel from_json(const json& j) { return bip::world_from_json(j); }
  static void to_json(json& j, const bip::WorldModel& w) { bip::to_json(j, w); }
};
template <>
struct adl_serializer<bip::Episode> {
  static bip::Episode from_json(const json& j) { return bip::episode_from_json(j); }
  static void to_json(json& j, const bip::Episode& e) { bip::to_json(j, e); }
};
}  // namespace nlohmann
