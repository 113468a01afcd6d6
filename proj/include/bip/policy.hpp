// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bip/belief.hpp"
#include "bip/planner.hpp"
#include "bip/world.hpp"

namespace bip {

struct PolicyQuery {
  WorldState state;
  BeliefState belief;
  std::string goal;
  std::vector<AgentAction> candidates;
};

/// Builds a query whose candidates are legal_actions(state).
PolicyQuery make_query(const WorldState& state, const BeliefState& belief, const std::string& goal,
                       const WorldModel& world);

/// Throws StructuralError if candidates are empty or contain duplicates.
void validate_query(const PolicyQuery& query);

/// Probabilities aligned with PolicyQuery::candidates.
struct ActionDistribution {
  std::vector<double> probs;
  bool operator==(const ActionDistribution&) const = default;
};

/// A distribution plus, for combined policies, the base (large-model)
/// distribution before redirection.
struct PolicyOutput {
  ActionDistribution dist;
  std::optional<ActionDistribution> base;
};

/// Anything that maps (state, belief, goal, candidates) to an action
/// distribution. Implementations must be safe to call concurrently.
class PolicyModel {
 public:
  virtual ~PolicyModel() = default;
  virtual PolicyOutput score(const PolicyQuery& query, const WorldModel& world) const = 0;
  virtual std::string descriptor() const = 0;
};

/// Stable fixture/cache key for a query in a world.
std::string query_key(const PolicyQuery& query, const WorldModel& world);

/// Boltzmann distribution over `values` at `temperature`. Temperatures below
/// kGreedyTemperature use the greedy limit: all mass on the first maximizer.
inline constexpr double kGreedyTemperature = 1e-8;
std::vector<double> boltzmann(std::span<const double> values, double temperature);

// ---------------------------------------------------------------------------
// Oracle

/// Goal-location-expected Q: sum over the belief's candidates for the goal
/// item of weight * Q(state with goal there, action).
double belief_expected_q(const PlanValues& plan, const WorldState& state, const BeliefState& belief,
                         const AgentAction& action);

ActionDistribution oracle_policy(const PolicyQuery& query, const WorldModel& world, double temperature);

/// Boltzmann-rational oracle with a shared plan cache.
class OraclePolicy final : public PolicyModel {
 public:
  explicit OraclePolicy(double temperature);
  PolicyOutput score(const PolicyQuery& query, const WorldModel& world) const override;
  std::string descriptor() const override;
  double temperature() const { return temperature_; }
  ActionDistribution distribution(const PolicyQuery& query, const WorldModel& world) const;

 private:
  double temperature_;
  std::shared_ptr<PlanCache> cache_ = std::make_shared<PlanCache>();
};

// ---------------------------------------------------------------------------
// Fixtures

class ReplayMissError : public std::runtime_error {
 public:
  explicit ReplayMissError(const std::string& key) : std::runtime_error("fixture replay miss for key " + key), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Recorded query-key -> distribution table. JSONL on disk, one
/// {"key": ..., "probs": [...]} record per line, sorted by key.
class FixtureTable {
 public:
  FixtureTable() = default;
  FixtureTable(const FixtureTable& other);
  FixtureTable& operator=(const FixtureTable& other);

  static FixtureTable load(const std::string& path);
  static FixtureTable parse(const std::string& jsonl);
  void save(const std::string& path) const;
  std::string to_jsonl() const;

  void put(const std::string& key, const ActionDistribution& dist);
  std::optional<ActionDistribution> find(const std::string& key) const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, ActionDistribution> entries_;
};

ActionDistribution fixture_policy(const PolicyQuery& query, const WorldModel& world, const FixtureTable& fixtures);

class FixturePolicy final : public PolicyModel {
 public:
  explicit FixturePolicy(std::shared_ptr<const FixtureTable> table, std::string source = "inline");
  PolicyOutput score(const PolicyQuery& query, const WorldModel& world) const override;
  std::string descriptor() const override;

 private:
  std::shared_ptr<const FixtureTable> table_;
  std::string source_;
};

/// Wraps a policy and records every distribution it returns.
class RecordingPolicy final : public PolicyModel {
 public:
  explicit RecordingPolicy(std::shared_ptr<const PolicyModel> inner);
  PolicyOutput score(const PolicyQuery& query, const WorldModel& world) const override;
  std::string descriptor() const override { return inner_->descriptor(); }
  const FixtureTable& recorded() const { return *table_; }

 private:
  std::shared_ptr<const PolicyModel> inner_;
  std::shared_ptr<FixtureTable> table_ = std::make_shared<FixtureTable>();
};

// ---------------------------------------------------------------------------
// Weak-to-strong combination

inline constexpr double kNaiveFloor = 1e-9;

/// pi_bar = pi_large * pi_expert / pi_naive / Z, computed in log space.
/// Naive entries below kNaiveFloor are clipped (and counted, see
/// w2s_clip_count). Throws StructuralError on length mismatch.
ActionDistribution w2s_combine(const ActionDistribution& large, const ActionDistribution& expert,
                               const ActionDistribution& naive);

/// Process-wide count of clipped naive entries.
std::uint64_t w2s_clip_count();

class W2SPolicy final : public PolicyModel {
 public:
  W2SPolicy(std::shared_ptr<const PolicyModel> large, std::shared_ptr<const PolicyModel> expert,
            std::shared_ptr<const PolicyModel> naive);
  PolicyOutput score(const PolicyQuery& query, const WorldModel& world) const override;
  std::string descriptor() const override;

 private:
  std::shared_ptr<const PolicyModel> large_, expert_, naive_;
};

// ---------------------------------------------------------------------------
// Post-training loss calculators

inline constexpr double kLossProbFloor = 1e-12;

struct Experience {
  WorldState state;
  BeliefState belief;
  std::string goal;
  AgentAction action;
};

struct PreferencePair {
  WorldState state;
  BeliefState belief;
  std::string goal;
  AgentAction preferred;
  AgentAction rejected;
};

struct ExperiencePool {
  std::vector<Experience> tuples;
  std::vector<PreferencePair> preferences;
};

/// Probability a scorer gives `action` among legal_actions(state).
double action_probability(const PolicyModel& scorer, const WorldModel& world, const WorldState& state,
                          const BeliefState& belief, const std::string& goal, const AgentAction& action);

/// -sum log pi(a_i | s_i, b_i, g_i), probabilities floored at 1e-12.
double instruction_tuning_loss(const ExperiencePool& pool, const PolicyModel& scorer, const WorldModel& world);

struct PreferenceLossConfig {
  double beta = 1.0;
  double lambda = 0.1;
  int samples = 16;
  std::uint64_t seed = 0;
  /// false: log(pi_ref / pi) as printed; true: log(pi / pi_ref).
  bool reversed_regularizer = false;
};

struct PreferenceLoss {
  double preference_term = 0.0;
  double regularizer_term = 0.0;  // before multiplying by lambda
  double total = 0.0;
};

/// mean -log sigmoid(beta * (log pi(a+) - log pi(a-))) plus lambda times the
/// mean per-context log-ratio regularizer on actions sampled from `reference`.
PreferenceLoss preference_loss(std::span<const PreferencePair> pairs, const PolicyModel& scorer,
                               const PolicyModel& reference, const WorldModel& world,
                               const PreferenceLossConfig& config = {});

}  // namespace bip
