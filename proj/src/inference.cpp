// SPDX-License-Identifier: Apache-2.0
#include "bip/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bip {
namespace {

void renormalize(std::vector<double>& logs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : logs) m = std::max(m, x);
  if (!std::isfinite(m)) throw StructuralError("posterior collapsed: no finite log posterior");
  double s = 0.0;
  for (double x : logs) s += std::exp(x - m);
  const double lse = m + std::log(s);
  for (double& x : logs) x -= lse;
}

}  // namespace

PosteriorAccumulator init_accumulator(std::vector<Hypothesis> hypotheses, const WorldModel& world, double epsilon,
                                      double belief_floor) {
  if (hypotheses.size() < 2) throw PreconditionError("init_accumulator: need at least two hypotheses");
  if (!(epsilon >= 0.0)) throw PreconditionError("init_accumulator: epsilon must be non-negative");
  PosteriorAccumulator acc;
  for (const auto& h : hypotheses) {
    if (!world.is_item(h.goal)) throw StructuralError("hypothesis goal is not an item: " + h.goal);
    if (!std::isfinite(h.prior_log)) throw StructuralError("hypothesis prior_log must be finite");
    acc.log_posteriors_.push_back(h.prior_log);
  }
  renormalize(acc.log_posteriors_);
  acc.hypotheses_ = std::move(hypotheses);
  acc.epsilon_ = epsilon;
  acc.belief_floor_ = belief_floor;
  return acc;
}

PosteriorAccumulator step_update(const PosteriorAccumulator& acc, const AgentAction& observed_action,
                                 const WorldState& state, std::span<const BeliefTransition> beliefs,
                                 const PolicyModel& policy, const WorldModel& world) {
  const auto n = acc.hypotheses_.size();
  if (beliefs.size() != n) throw StructuralError("step_update: need one belief transition per hypothesis");
  const auto candidates = legal_actions(state, world);
  auto it = std::find(candidates.begin(), candidates.end(), observed_action);
  if (it == candidates.end())
    throw PreconditionError("step_update: observed action " + observed_action.to_string() + " is not legal");
  const auto index = static_cast<std::size_t>(it - candidates.begin());

  PosteriorAccumulator next = acc;
  StepTrace step;
  std::vector<double> base_probs;
  bool all_base = true;
  for (std::size_t h = 0; h < n; ++h) {
    const PolicyQuery query{state, beliefs[h].current, acc.hypotheses_[h].goal, candidates};
    const auto out = policy.score(query, world);
    if (out.dist.probs.size() != candidates.size()) throw StructuralError("policy returned wrong-length distribution");
    const double p = out.dist.probs[index];
    const double belief_factor = transition_likelihood(beliefs[h].previous, beliefs[h].current,
                                                       beliefs[h].observation, world, acc.belief_floor_);
    const double delta = std::log(p + acc.epsilon_) + std::log(belief_factor);
    next.log_posteriors_[h] += delta;
    step.log_likelihood_deltas.push_back(delta);
    step.action_probs.push_back(p);
    if (out.base) base_probs.push_back(out.base->probs.at(index));
    else all_base = false;
  }
  if (all_base) step.base_action_probs = std::move(base_probs);
  renormalize(next.log_posteriors_);
  next.trace_.push_back(std::move(step));
  ++next.step_index_;
  return next;
}

PosteriorAccumulator apply_terminal_factors(const PosteriorAccumulator& acc, std::span<const double> log_factors) {
  if (log_factors.size() != acc.hypotheses_.size()) throw StructuralError("apply_terminal_factors: size mismatch");
  PosteriorAccumulator next = acc;
  for (std::size_t h = 0; h < log_factors.size(); ++h) next.log_posteriors_[h] += log_factors[h];
  renormalize(next.log_posteriors_);
  return next;
}

Comparison compare(const PosteriorAccumulator& acc) {
  if (acc.hypotheses().size() != 2) throw PreconditionError("compare: exactly two hypotheses required");
  Comparison c;
  c.log_ratio = acc.log_posteriors()[0] - acc.log_posteriors()[1];
  c.tie = c.log_ratio == 0.0;
  c.winner = c.log_ratio < 0.0 ? 1 : 0;
  return c;
}

std::size_t argmax(const PosteriorAccumulator& acc) {
  const auto& lp = acc.log_posteriors();
  return static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
}

std::string qtype_name(QuestionType t) {
  switch (t) {
    case QuestionType::T1_1: return "1.1";
    case QuestionType::T1_2: return "1.2";
    case QuestionType::T1_3: return "1.3";
    case QuestionType::T2_1: return "2.1";
    case QuestionType::T2_2: return "2.2";
    case QuestionType::T2_3: return "2.3";
    case QuestionType::T2_4: return "2.4";
  }
  return "?";
}

QuestionType parse_qtype(const std::string& name) {
  for (auto t : kAllQuestionTypes) {
    if (qtype_name(t) == name) return t;
  }
  throw StructuralError("unknown question type: " + name);
}

bool is_belief_type(QuestionType t) {
  return t == QuestionType::T1_1 || t == QuestionType::T1_2 || t == QuestionType::T1_3;
}

void validate_question(const Question& q) {
  verify_episode(q.episode_prefix);
  const auto& world = q.episode_prefix.world;
  for (const Hypothesis* h : {&q.hypothesis_a, &q.hypothesis_b}) {
    if (!world.is_item(h->goal)) throw StructuralError("question " + q.id + ": unknown goal " + h->goal);
    if (!std::isfinite(h->prior_log)) throw StructuralError("question " + q.id + ": non-finite prior");
    if (h->belief_hyp) {
      if (!world.is_item(h->belief_hyp->item) || !world.is_location(h->belief_hyp->asserted_location))
        throw StructuralError("question " + q.id + ": belief hypothesis references unknown ids");
    }
  }
  if (q.hypothesis_a.goal == q.hypothesis_b.goal && q.hypothesis_a.belief_hyp == q.hypothesis_b.belief_hyp)
    throw StructuralError("question " + q.id + ": hypotheses are identical");
}

Answer answer_question(const Question& q, const PolicyModel& policy, const WorldModel& world, double epsilon,
                       double belief_floor) {
  validate_question(q);
  const auto& ep = q.episode_prefix;
  if (world.fingerprint() != ep.world.fingerprint()) throw StructuralError("question " + q.id + ": world mismatch");

  auto acc = init_accumulator({q.hypothesis_a, q.hypothesis_b}, world, epsilon, belief_floor);
  BeliefState prev = init_belief(world, world.items(), ep.prior_knowledge);
  WorldState state = ep.initial_state;
  Observation obs = observe(state, world);
  BeliefState cur = update_belief(prev, obs, world);
  for (const auto& step : ep.steps) {
    const BeliefTransition bt{prev, cur, obs};
    const BeliefTransition both[] = {bt, bt};
    acc = step_update(acc, step.action, state, both, policy, world);
    prev = std::move(cur);
    state = step.state;
    obs = step.observation;
    cur = update_belief(prev, obs, world);
  }

  if (q.hypothesis_a.belief_hyp || q.hypothesis_b.belief_hyp) {
    std::vector<double> factors;
    for (const Hypothesis* h : {&q.hypothesis_a, &q.hypothesis_b}) {
      factors.push_back(h->belief_hyp ? std::log(hypothesis_consistency(*h->belief_hyp, cur, belief_floor)) : 0.0);
    }
    acc = apply_terminal_factors(acc, factors);
  }

  const auto cmp = compare(acc);
  return Answer{cmp.winner == 0 ? Label::A : Label::B, cmp.log_ratio, cmp.tie, std::move(acc)};
}

std::optional<std::vector<double>> likelihood_change_trace(const PosteriorAccumulator& acc) {
  if (acc.trace().empty()) return std::nullopt;
  std::vector<double> out;
  for (const auto& step : acc.trace()) {
    if (!step.base_action_probs) return std::nullopt;
    double total = 0.0;
    for (std::size_t h = 0; h < step.action_probs.size(); ++h)
      total += std::abs(step.action_probs[h] - (*step.base_action_probs)[h]);
    out.push_back(total / static_cast<double>(step.action_probs.size()));
  }
  return out;
}

}  // namespace bip
