// SPDX-License-Identifier: Apache-2.0
//
// Procedural worlds, episodes and two-hypothesis questions for the seven
// question types, plus vocabulary re-skinning (themes) of whole suites.
// Construction recipes per type are described in docs/question-types.md.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bip/inference.hpp"
#include "bip/world.hpp"

namespace bip {

struct WorldBounds {
  int rooms = 4;
  int containers = 4;
  int items = 4;
};

struct GenConfig {
  std::uint64_t rng_seed = 0;
  int n_questions = 200;
  std::map<QuestionType, int> qtype_mix;
  WorldBounds world_size;
  double agent_temperature = 0.5;
  std::string theme = "apartment";
  int horizon = 40;
};

/// Half belief, half goal questions, each half split as evenly as possible
/// over its types (earlier types take the remainder).
std::map<QuestionType, int> balanced_mix(int n_questions);

/// 200 questions: 34/33/33 over the belief types, 25 per goal type.
GenConfig default_gen_config(std::uint64_t seed = 0);

/// Throws StructuralError on bad bounds, counts or temperature.
void validate_gen_config(const GenConfig& config);

struct GeneratedWorld {
  WorldModel world;
  WorldState state;
};

/// Room count, container count and item count are each drawn from
/// [ceil(max/2), max]. Rooms form a random spanning tree plus extra doors;
/// every room gets one surface. Deterministic in `seed`.
GeneratedWorld generate_world(const WorldBounds& bounds, std::uint64_t seed);

/// Either a question or the reason this world cannot host the type.
struct QuestionOutcome {
  std::optional<Question> question;
  std::string regenerate_reason;
};

QuestionOutcome generate_question(const WorldModel& world, const WorldState& initial_state, QuestionType qtype,
                                  double temperature, std::uint64_t seed, int horizon = 40);

/// Exact per-type counts, ids q0000.. in type order. Each slot retries with a
/// fresh world up to 100 times before throwing GenerationError.
std::vector<Question> generate_suite(const GenConfig& config);

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMaxRegenerations = 100;

/// Bijective renaming per entity class.
struct ThemeMap {
  std::string id;
  std::map<std::string, std::string> rooms;
  std::map<std::string, std::string> containers;
  std::map<std::string, std::string> surfaces;
  std::map<std::string, std::string> items;
  bool operator==(const ThemeMap&) const = default;
};

/// Throws StructuralError unless every class map is injective and the
/// combined image has no collisions across classes.
void validate_theme(const ThemeMap& theme);
ThemeMap invert(const ThemeMap& theme);
ThemeMap identity_theme(const std::string& id = "apartment");

/// The vocabulary generate_world draws from.
struct Vocabulary {
  std::vector<std::string> rooms;
  std::vector<std::string> containers;
  std::vector<std::string> surfaces;
  std::vector<std::string> items;
};
const Vocabulary& apartment_vocabulary();

/// The five themes shipped under themes/, compiled in.
std::vector<ThemeMap> builtin_themes();
/// Builtin theme by id ("apartment" is the identity).
ThemeMap find_theme(const std::string& id);

/// True when the renaming keeps the relative order of rooms, items, and of
/// containers and surfaces taken together. Any computation that depends on
/// ids only through sorting then behaves identically after retheme.
bool preserves_order(const ThemeMap& theme, const Vocabulary& source);

Question retheme(const Question& q, const ThemeMap& theme);
std::vector<Question> retheme(const std::vector<Question>& suite, const ThemeMap& theme);

}  // namespace bip
