// SPDX-License-Identifier: Apache-2.0
//
// Bayesian inverse planning: log-space posterior accumulation over
// (goal, belief) hypotheses, two-hypothesis comparison, question answering
// and the per-step likelihood-change trace of a weak-to-strong policy.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bip/belief.hpp"
#include "bip/policy.hpp"
#include "bip/world.hpp"

namespace bip {

inline constexpr double kDefaultEpsilon = 1e-6;

struct Hypothesis {
  std::string goal;
  std::optional<BeliefHypothesis> belief_hyp;
  double prior_log = 0.0;
  bool operator==(const Hypothesis&) const = default;
};

/// One hypothesis's belief transition at a step: b^{t-1} -> b^t given o^t.
struct BeliefTransition {
  BeliefState previous;
  BeliefState current;
  Observation observation;
};

struct StepTrace {
  /// Log-likelihood added to each hypothesis at this step.
  std::vector<double> log_likelihood_deltas;
  /// Probability of the observed action under each hypothesis.
  std::vector<double> action_probs;
  /// Same, from the base policy before weak-to-strong redirection.
  std::optional<std::vector<double>> base_action_probs;
};

class PosteriorAccumulator {
 public:
  const std::vector<Hypothesis>& hypotheses() const { return hypotheses_; }
  const std::vector<double>& log_posteriors() const { return log_posteriors_; }
  std::size_t step_index() const { return step_index_; }
  double epsilon() const { return epsilon_; }
  double belief_floor() const { return belief_floor_; }
  const std::vector<StepTrace>& trace() const { return trace_; }

 private:
  friend PosteriorAccumulator init_accumulator(std::vector<Hypothesis>, const WorldModel&, double, double);
  friend PosteriorAccumulator step_update(const PosteriorAccumulator&, const AgentAction&, const WorldState&,
                                          std::span<const BeliefTransition>, const PolicyModel&, const WorldModel&);
  friend PosteriorAccumulator apply_terminal_factors(const PosteriorAccumulator&, std::span<const double>);

  std::vector<Hypothesis> hypotheses_;
  std::vector<double> log_posteriors_;
  std::size_t step_index_ = 0;
  double epsilon_ = kDefaultEpsilon;
  double belief_floor_ = kDefaultBeliefFloor;
  std::vector<StepTrace> trace_;
};

/// Normalized log priors. Requires at least two hypotheses with known goals.
PosteriorAccumulator init_accumulator(std::vector<Hypothesis> hypotheses, const WorldModel& world,
                                      double epsilon = kDefaultEpsilon, double belief_floor = kDefaultBeliefFloor);

/// Adds log(pi(a | s, b_h, g_h) + epsilon) + log P(b_h | b_h^-, o) to each
/// hypothesis and renormalizes with log-sum-exp.
PosteriorAccumulator step_update(const PosteriorAccumulator& acc, const AgentAction& observed_action,
                                 const WorldState& state, std::span<const BeliefTransition> beliefs,
                                 const PolicyModel& policy, const WorldModel& world);

/// Adds one log factor per hypothesis (not a step) and renormalizes.
PosteriorAccumulator apply_terminal_factors(const PosteriorAccumulator& acc, std::span<const double> log_factors);

struct Comparison {
  std::size_t winner = 0;
  double log_ratio = 0.0;
  bool tie = false;
};

/// Two-hypothesis log posterior ratio; ties go to hypothesis 0.
Comparison compare(const PosteriorAccumulator& acc);

/// Index of the largest posterior (first on ties), any number of hypotheses.
std::size_t argmax(const PosteriorAccumulator& acc);

enum class QuestionType { T1_1, T1_2, T1_3, T2_1, T2_2, T2_3, T2_4 };
inline constexpr QuestionType kAllQuestionTypes[] = {QuestionType::T1_1, QuestionType::T1_2, QuestionType::T1_3,
                                                     QuestionType::T2_1, QuestionType::T2_2, QuestionType::T2_3,
                                                     QuestionType::T2_4};
std::string qtype_name(QuestionType t);
QuestionType parse_qtype(const std::string& name);
bool is_belief_type(QuestionType t);

enum class Label { A, B };

struct Question {
  std::string id;
  Episode episode_prefix;
  Hypothesis hypothesis_a;
  Hypothesis hypothesis_b;
  Label correct = Label::A;
  QuestionType qtype = QuestionType::T1_1;
  bool operator==(const Question&) const = default;
};

/// Throws StructuralError unless the question is well formed.
void validate_question(const Question& q);

struct Answer {
  Label chosen = Label::A;
  double log_ratio = 0.0;
  bool tie = false;
  PosteriorAccumulator accumulator;
};

/// Tracks the agent's belief through the prefix with update_belief, runs
/// step_update for every recorded action, then folds each hypothesis's
/// belief assertion in as a terminal hypothesis_consistency factor.
Answer answer_question(const Question& q, const PolicyModel& policy, const WorldModel& world,
                       double epsilon = kDefaultEpsilon, double belief_floor = kDefaultBeliefFloor);

/// Per step, |pi_bar(a) - pi_large(a)| for the observed action averaged over
/// hypotheses. nullopt when any step lacks base probabilities.
std::optional<std::vector<double>> likelihood_change_trace(const PosteriorAccumulator& acc);

}  // namespace bip
