// SPDX-License-Identifier: Apache-2.0
#include "bip/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "bip/serialization.hpp"

namespace bip {
namespace {

std::atomic<std::uint64_t> g_clip_count{0};

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

PolicyQuery make_query(const WorldState& state, const BeliefState& belief, const std::string& goal,
                       const WorldModel& world) {
  return PolicyQuery{state, belief, goal, legal_actions(state, world)};
}

void validate_query(const PolicyQuery& query) {
  if (query.candidates.empty()) throw StructuralError("policy query has no candidates");
  std::set<AgentAction> seen(query.candidates.begin(), query.candidates.end());
  if (seen.size() != query.candidates.size()) throw StructuralError("policy query has duplicate candidates");
}

std::string query_key(const PolicyQuery& query, const WorldModel& world) {
  const json j{{"world", to_hex(world.fingerprint())},
               {"state", query.state},
               {"belief", query.belief},
               {"goal", query.goal},
               {"candidates", query.candidates}};
  return to_hex(fnv1a(j.dump()));
}

std::vector<double> boltzmann(std::span<const double> values, double temperature) {
  if (values.empty()) throw StructuralError("boltzmann: no values");
  if (!(temperature > 0.0)) throw PreconditionError("temperature must be positive");
  std::vector<double> out(values.size(), 0.0);
  const auto best = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
  if (temperature < kGreedyTemperature) {
    out[best] = 1.0;
    return out;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp((values[i] - values[best]) / temperature);
    total += out[i];
  }
  for (auto& p : out) p /= total;
  return out;
}

double belief_expected_q(const PlanValues& plan, const WorldState& state, const BeliefState& belief,
                         const AgentAction& action) {
  if (state.agent_holding) return plan.q_at(state, {}, action);
  const auto& ib = belief.at(plan.goal());
  double q = 0.0;
  for (std::size_t i = 0; i < ib.candidates.size(); ++i) q += ib.weights[i] * plan.q_at(state, ib.candidates[i], action);
  return q;
}

namespace {

ActionDistribution oracle_from_plan(const PlanValues& plan, const PolicyQuery& query, double temperature) {
  validate_query(query);
  std::vector<double> q;
  q.reserve(query.candidates.size());
  for (const auto& a : query.candidates) q.push_back(belief_expected_q(plan, query.state, query.belief, a));
  return ActionDistribution{boltzmann(q, temperature)};
}

}  // namespace

ActionDistribution oracle_policy(const PolicyQuery& query, const WorldModel& world, double temperature) {
  if (!(temperature > 0.0)) throw PreconditionError("temperature must be positive");
  return oracle_from_plan(plan_values(world, query.goal), query, temperature);
}

OraclePolicy::OraclePolicy(double temperature) : temperature_(temperature) {
  if (!(temperature > 0.0)) throw PreconditionError("temperature must be positive");
}

ActionDistribution OraclePolicy::distribution(const PolicyQuery& query, const WorldModel& world) const {
  return oracle_from_plan(*cache_->get(world, query.goal), query, temperature_);
}

PolicyOutput OraclePolicy::score(const PolicyQuery& query, const WorldModel& world) const {
  return PolicyOutput{distribution(query, world), std::nullopt};
}

std::string OraclePolicy::descriptor() const { return "oracle{temperature=" + format_real(temperature_) + "}"; }

// ---------------------------------------------------------------------------

FixtureTable::FixtureTable(const FixtureTable& other) {
  std::lock_guard lock(other.mutex_);
  entries_ = other.entries_;
}

FixtureTable& FixtureTable::operator=(const FixtureTable& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  entries_ = other.entries_;
  return *this;
}

FixtureTable FixtureTable::parse(const std::string& jsonl) {
  FixtureTable t;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      t.entries_[j.at("key").get<std::string>()] = ActionDistribution{j.at("probs").get<std::vector<double>>()};
    } catch (const json::exception& e) {
      throw StructuralError("fixture line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return t;
}

FixtureTable FixtureTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open fixture file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string FixtureTable::to_jsonl() const {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& [key, dist] : entries_) {
    out += json{{"key", key}, {"probs", dist.probs}}.dump();
    out += '\n';
  }
  return out;
}

void FixtureTable::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StructuralError("cannot write fixture file: " + path);
  out << to_jsonl();
}

void FixtureTable::put(const std::string& key, const ActionDistribution& dist) {
  std::lock_guard lock(mutex_);
  entries_[key] = dist;
}

std::optional<ActionDistribution> FixtureTable::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::size_t FixtureTable::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

ActionDistribution fixture_policy(const PolicyQuery& query, const WorldModel& world, const FixtureTable& fixtures) {
  validate_query(query);
  const auto key = query_key(query, world);
  auto hit = fixtures.find(key);
  if (!hit) throw ReplayMissError(key);
  if (hit->probs.size() != query.candidates.size())
    throw StructuralError("fixture " + key + " has " + std::to_string(hit->probs.size()) + " probs for " +
                          std::to_string(query.candidates.size()) + " candidates");
  return *hit;
}

FixturePolicy::FixturePolicy(std::shared_ptr<const FixtureTable> table, std::string source)
    : table_(std::move(table)), source_(std::move(source)) {}

PolicyOutput FixturePolicy::score(const PolicyQuery& query, const WorldModel& world) const {
  return PolicyOutput{fixture_policy(query, world, *table_), std::nullopt};
}

std::string FixturePolicy::descriptor() const { return "fixture{" + source_ + "}"; }

RecordingPolicy::RecordingPolicy(std::shared_ptr<const PolicyModel> inner) : inner_(std::move(inner)) {}

PolicyOutput RecordingPolicy::score(const PolicyQuery& query, const WorldModel& world) const {
  auto out = inner_->score(query, world);
  table_->put(query_key(query, world), out.dist);
  return out;
}

// ---------------------------------------------------------------------------

ActionDistribution w2s_combine(const ActionDistribution& large, const ActionDistribution& expert,
                               const ActionDistribution& naive) {
  const auto n = large.probs.size();
  if (expert.probs.size() != n || naive.probs.size() != n)
    throw StructuralError("w2s_combine: distributions have different lengths");
  if (n == 0) throw StructuralError("w2s_combine: empty distributions");
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    double denom = naive.probs[i];
    if (denom < kNaiveFloor) {
      denom = kNaiveFloor;
      g_clip_count.fetch_add(1, std::memory_order_relaxed);
    }
    logits[i] = std::log(large.probs[i]) + std::log(expert.probs[i]) - std::log(denom);
  }
  const double z = log_sum_exp(logits);
  if (!std::isfinite(z)) throw StructuralError("w2s_combine: large and expert share no support");
  ActionDistribution out;
  out.probs.reserve(n);
  for (double l : logits) out.probs.push_back(std::exp(l - z));
  return out;
}

std::uint64_t w2s_clip_count() { return g_clip_count.load(std::memory_order_relaxed); }

W2SPolicy::W2SPolicy(std::shared_ptr<const PolicyModel> large, std::shared_ptr<const PolicyModel> expert,
                     std::shared_ptr<const PolicyModel> naive)
    : large_(std::move(large)), expert_(std::move(expert)), naive_(std::move(naive)) {
  if (!large_ || !expert_ || !naive_) throw StructuralError("W2SPolicy needs large, expert and naive policies");
}

PolicyOutput W2SPolicy::score(const PolicyQuery& query, const WorldModel& world) const {
  auto large = large_->score(query, world).dist;
  const auto expert = expert_->score(query, world).dist;
  const auto naive = naive_->score(query, world).dist;
  auto combined = w2s_combine(large, expert, naive);
  return PolicyOutput{std::move(combined), std::move(large)};
}

std::string W2SPolicy::descriptor() const {
  return "w2s{large=" + large_->descriptor() + ",expert=" + expert_->descriptor() + ",naive=" + naive_->descriptor() +
         "}";
}

// ---------------------------------------------------------------------------

double action_probability(const PolicyModel& scorer, const WorldModel& world, const WorldState& state,
                          const BeliefState& belief, const std::string& goal, const AgentAction& action) {
  const auto query = make_query(state, belief, goal, world);
  auto it = std::find(query.candidates.begin(), query.candidates.end(), action);
  if (it == query.candidates.end()) throw StructuralError("action not among candidates: " + action.to_string());
  const auto dist = scorer.score(query, world).dist;
  return dist.probs.at(static_cast<std::size_t>(it - query.candidates.begin()));
}

double instruction_tuning_loss(const ExperiencePool& pool, const PolicyModel& scorer, const WorldModel& world) {
  if (pool.tuples.empty()) throw PreconditionError("instruction_tuning_loss: empty pool");
  double loss = 0.0;
  for (const auto& e : pool.tuples) {
    const double p = action_probability(scorer, world, e.state, e.belief, e.goal, e.action);
    loss -= std::log(std::max(p, kLossProbFloor));
  }
  return loss;
}

PreferenceLoss preference_loss(std::span<const PreferencePair> pairs, const PolicyModel& scorer,
                               const PolicyModel& reference, const WorldModel& world,
                               const PreferenceLossConfig& config) {
  if (pairs.empty()) throw PreconditionError("preference_loss: no pairs");
  if (config.samples < 1) throw PreconditionError("preference_loss: samples must be >= 1");
  PreferenceLoss out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pr = pairs[i];
    if (pr.preferred == pr.rejected) throw StructuralError("preference pair with identical actions");
    const auto query = make_query(pr.state, pr.belief, pr.goal, world);
    const auto index_of = [&](const AgentAction& a) {
      auto it = std::find(query.candidates.begin(), query.candidates.end(), a);
      if (it == query.candidates.end()) throw StructuralError("action not among candidates: " + a.to_string());
      return static_cast<std::size_t>(it - query.candidates.begin());
    };
    const auto pi = scorer.score(query, world).dist.probs;
    const auto ref = reference.score(query, world).dist.probs;
    const double delta = std::log(std::max(pi[index_of(pr.preferred)], kLossProbFloor)) -
                         std::log(std::max(pi[index_of(pr.rejected)], kLossProbFloor));
    // -log sigmoid(x) = log1p(exp(-x)), evaluated without overflow.
    const double x = config.beta * delta;
    out.preference_term += x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));

    Rng rng(derive_seed(config.seed, i));
    double reg = 0.0;
    for (int s = 0; s < config.samples; ++s) {
      double u = rng.uniform();
      std::size_t k = 0;
      while (k + 1 < ref.size() && u >= ref[k]) {
        u -= ref[k];
        ++k;
      }
      const double log_ref = std::log(std::max(ref[k], kLossProbFloor));
      const double log_pi = std::log(std::max(pi[k], kLossProbFloor));
      reg += config.reversed_regularizer ? log_pi - log_ref : log_ref - log_pi;
    }
    out.regularizer_term += reg / config.samples;
  }
  const double n = static_cast<double>(pairs.size());
  out.preference_term /= n;
  out.regularizer_term /= n;
  out.total = out.preference_term + config.lambda * out.regularizer_term;
  return out;
}

}  // namespace bip
