// SPDX-License-Identifier: Apache-2.0
//
// Evaluation runner: builds policy stacks from specs, answers a suite in
// parallel and writes per-question results, the per-type table and the
// weak-to-strong likelihood-change trace.
#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bip/inference.hpp"
#include "bip/policy.hpp"
#include "bip/remote.hpp"

namespace bip {

/// Bad run configuration: unknown policy kind, missing endpoint, bad paths.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// trace_export on a run that has no weak-to-strong trace.
class TraceAbsentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PolicySpec {
  enum class Kind { Oracle, Fixture, Remote, W2S };
  Kind kind = Kind::Oracle;
  double temperature = 0.5;       // oracle
  std::string path;               // fixture
  std::string endpoint;           // remote; empty means the role's env var
  std::string template_path;      // remote; empty means the builtin template
  ResponseFormat format = ResponseFormat::Score;
  std::string model;
  bool length_normalize = false;
  std::vector<PolicySpec> parts;  // w2s: large, expert, naive

  static PolicySpec oracle(double temperature);
  static PolicySpec fixture(std::string path);
  static PolicySpec remote(std::string endpoint);
  static PolicySpec w2s(PolicySpec large, PolicySpec expert, PolicySpec naive);
};

struct RunConfig {
  std::string suite;
  PolicySpec policy;
  double epsilon = kDefaultEpsilon;
  int parallelism = 1;
  std::string out = "out";
  /// When set, every leaf policy's answers are recorded to this fixture file
  /// (for a w2s root: <stem>.large.jsonl, <stem>.expert.jsonl, <stem>.naive.jsonl).
  std::string record;
};

void to_json(nlohmann::json& j, const PolicySpec& spec);
void from_json(const nlohmann::json& j, PolicySpec& spec);
void to_json(nlohmann::json& j, const RunConfig& config);
void from_json(const nlohmann::json& j, RunConfig& config);

/// Throws ConfigError. Parse errors in the file are reported with its name.
RunConfig load_run_config(const std::string& path);

/// Remote leaves without an endpoint read BIP_LARGE_URL, BIP_EXPERT_URL or
/// BIP_NAIVE_URL by role (a remote root is "large").
std::shared_ptr<const PolicyModel> build_policy(const PolicySpec& spec,
                                                std::shared_ptr<HttpTransport> transport = nullptr);

struct QuestionResult {
  std::string id;
  QuestionType qtype = QuestionType::T1_1;
  Label correct = Label::A;
  Label chosen = Label::A;
  bool is_correct = false;
  double log_ratio = 0.0;
  bool tie = false;
  std::size_t steps = 0;
  /// Per-step likelihood change, only for weak-to-strong policies.
  std::optional<std::vector<double>> w2s_delta;
  bool errored = false;
  std::string error;
};

struct TypeSummary {
  int answered = 0;
  int correct = 0;
  int errored = 0;
  double accuracy() const { return answered ? static_cast<double>(correct) / answered : 0.0; }
};

struct EvalResult {
  std::string policy;
  double epsilon = kDefaultEpsilon;
  std::vector<QuestionResult> results;  // sorted by id
  std::map<QuestionType, TypeSummary> by_type;
  TypeSummary overall;
  /// Errors that should surface as a remote-protocol failure.
  int protocol_errors = 0;
};

/// Answers every question with a pool of `parallelism` workers. Transport
/// and protocol failures mark the question errored; other errors propagate.
EvalResult evaluate(const std::vector<Question>& suite, const PolicyModel& policy, double epsilon = kDefaultEpsilon,
                    int parallelism = 1);

/// Mean of the per-type accuracies over types with answered questions.
double macro_accuracy(const EvalResult& result, bool belief_types);

nlohmann::json result_to_json(const QuestionResult& r, const EvalResult& run);
void write_results_jsonl(const EvalResult& result, std::ostream& out);
/// metric,1.1,1.2,1.3,belief-avg,2.1,2.2,2.3,2.4,goal-avg,all
void write_table_csv(const EvalResult& result, std::ostream& out);

struct TraceRow {
  std::size_t step = 0;
  double mean_abs_delta = 0.0;
  std::size_t n_cases = 0;
};

/// Step-aligned average of the per-question w2s_delta series. Throws
/// TraceAbsentError when no result carries one.
std::vector<TraceRow> trace_series(const std::vector<QuestionResult>& results);
std::vector<TraceRow> trace_from_results_jsonl(const std::string& path);
void write_trace_csv(const std::vector<TraceRow>& rows, std::ostream& out);

/// Loads the suite, builds the policy (wrapping leaves for recording when
/// asked), evaluates and writes results.jsonl and table.csv under out/.
EvalResult eval_run(const RunConfig& config, std::shared_ptr<HttpTransport> transport = nullptr);

}  // namespace bip
