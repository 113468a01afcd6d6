// SPDX-License-Identifier: Apache-2.0
#include "bip/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "bip/serialization.hpp"

namespace bip {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* format_name(ResponseFormat f) { return f == ResponseFormat::Score ? "score" : "completions"; }

std::string env_var_for(const std::string& role) {
  if (role == "expert") return "BIP_EXPERT_URL";
  if (role == "naive") return "BIP_NAIVE_URL";
  return "BIP_LARGE_URL";
}

std::string record_path(const std::string& base, const std::string& role) {
  if (role.empty()) return base;
  std::string stem = base;
  if (stem.size() > 6 && stem.ends_with(".jsonl")) stem.resize(stem.size() - 6);
  return stem + "." + role + ".jsonl";
}

struct Recorder {
  std::string path;
  std::shared_ptr<const RecordingPolicy> policy;
};

// role: "" for the root, else large/expert/naive (dotted when nested).
std::shared_ptr<const PolicyModel> build(const PolicySpec& spec, const std::string& role,
                                         std::shared_ptr<HttpTransport> transport, const std::string& record,
                                         std::vector<Recorder>* recorders) {
  std::shared_ptr<const PolicyModel> leaf;
  switch (spec.kind) {
    case PolicySpec::Kind::Oracle:
      if (!(spec.temperature > 0.0)) throw ConfigError("oracle temperature must be positive");
      leaf = std::make_shared<OraclePolicy>(spec.temperature);
      break;
    case PolicySpec::Kind::Fixture: {
      if (spec.path.empty()) throw ConfigError("fixture policy needs a path");
      FixtureTable table;
      try {
        table = FixtureTable::load(spec.path);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
      leaf = std::make_shared<FixturePolicy>(std::make_shared<const FixtureTable>(std::move(table)), spec.path);
      break;
    }
    case PolicySpec::Kind::Remote: {
      RemoteConfig rc;
      rc.endpoint = spec.endpoint;
      const std::string top = role.substr(0, role.find('.'));
      if (rc.endpoint.empty()) {
        const auto var = env_var_for(top);
        const char* value = std::getenv(var.c_str());
        if (!value || !*value) throw ConfigError("remote policy has no endpoint and " + var + " is unset");
        rc.endpoint = value;
      }
      if (!rc.endpoint.starts_with("http://"))
        throw ConfigError("remote endpoint must be an http:// URL: " + rc.endpoint);
      if (!spec.template_path.empty()) rc.template_text = read_file(spec.template_path);
      rc.format = spec.format;
      rc.model = spec.model;
      rc.length_normalize = spec.length_normalize;
      leaf = std::make_shared<RemotePolicy>(rc, transport ? transport : make_http_transport());
      break;
    }
    case PolicySpec::Kind::W2S: {
      if (spec.parts.size() != 3) throw ConfigError("w2s policy needs large, expert and naive parts");
      const char* names[] = {"large", "expert", "naive"};
      std::shared_ptr<const PolicyModel> parts[3];
      for (int i = 0; i < 3; ++i) {
        const std::string sub = role.empty() ? names[i] : role + "." + names[i];
        parts[i] = build(spec.parts[static_cast<std::size_t>(i)], sub, transport, record, recorders);
      }
      return std::make_shared<W2SPolicy>(parts[0], parts[1], parts[2]);
    }
  }
  if (recorders && !record.empty()) {
    auto rec = std::make_shared<const RecordingPolicy>(leaf);
    recorders->push_back({record_path(record, role), rec});
    return rec;
  }
  return leaf;
}

std::string label_name(Label l) { return l == Label::A ? "a" : "b"; }

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

PolicySpec PolicySpec::oracle(double temperature) {
  PolicySpec s;
  s.kind = Kind::Oracle;
  s.temperature = temperature;
  return s;
}

PolicySpec PolicySpec::fixture(std::string path) {
  PolicySpec s;
  s.kind = Kind::Fixture;
  s.path = std::move(path);
  return s;
}

PolicySpec PolicySpec::remote(std::string endpoint) {
  PolicySpec s;
  s.kind = Kind::Remote;
  s.endpoint = std::move(endpoint);
  return s;
}

PolicySpec PolicySpec::w2s(PolicySpec large, PolicySpec expert, PolicySpec naive) {
  PolicySpec s;
  s.kind = Kind::W2S;
  s.parts = {std::move(large), std::move(expert), std::move(naive)};
  return s;
}

void to_json(nlohmann::json& j, const PolicySpec& spec) {
  switch (spec.kind) {
    case PolicySpec::Kind::Oracle: j = {{"oracle", {{"temperature", spec.temperature}}}}; break;
    case PolicySpec::Kind::Fixture: j = {{"fixture", {{"path", spec.path}}}}; break;
    case PolicySpec::Kind::Remote: {
      nlohmann::json r{{"endpoint", spec.endpoint}, {"format", format_name(spec.format)}};
      if (!spec.template_path.empty()) r["template"] = spec.template_path;
      if (!spec.model.empty()) r["model"] = spec.model;
      if (spec.length_normalize) r["length_normalize"] = true;
      j = {{"remote", r}};
      break;
    }
    case PolicySpec::Kind::W2S:
      j = {{"w2s", {{"large", spec.parts.at(0)}, {"expert", spec.parts.at(1)}, {"naive", spec.parts.at(2)}}}};
      break;
  }
}

void from_json(const nlohmann::json& j, PolicySpec& spec) {
  if (!j.is_object() || j.size() != 1) throw ConfigError("policy spec must be an object with exactly one kind");
  const auto& [kind, body] = *j.items().begin();
  if (!body.is_object()) throw ConfigError("policy spec body for " + kind + " must be an object");
  spec = PolicySpec{};
  try {
    if (kind == "oracle") {
      spec.kind = PolicySpec::Kind::Oracle;
      spec.temperature = body.value("temperature", 0.5);
    } else if (kind == "fixture") {
      spec.kind = PolicySpec::Kind::Fixture;
      spec.path = body.at("path").get<std::string>();
    } else if (kind == "remote") {
      spec.kind = PolicySpec::Kind::Remote;
      spec.endpoint = body.value("endpoint", "");
      spec.template_path = body.value("template", "");
      spec.model = body.value("model", "");
      spec.length_normalize = body.value("length_normalize", false);
      const auto format = body.value("format", "score");
      if (format == "score") spec.format = ResponseFormat::Score;
      else if (format == "completions") spec.format = ResponseFormat::Completions;
      else throw ConfigError("unknown remote format " + format);
    } else if (kind == "w2s") {
      spec.kind = PolicySpec::Kind::W2S;
      for (const char* part : {"large", "expert", "naive"}) {
        if (!body.contains(part)) throw ConfigError(std::string("w2s policy lacks ") + part);
        spec.parts.push_back(body[part].get<PolicySpec>());
      }
    } else {
      throw ConfigError("unknown policy kind " + kind);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("policy spec " + kind + ": " + e.what());
  }
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"suite", c.suite}, {"policy", c.policy}, {"epsilon", c.epsilon}, {"parallelism", c.parallelism},
       {"out", c.out}};
  if (!c.record.empty()) j["record"] = c.record;
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  c = RunConfig{};
  try {
    c.suite = j.value("suite", "");
    if (j.contains("policy")) c.policy = j["policy"].get<PolicySpec>();
    c.epsilon = j.value("epsilon", kDefaultEpsilon);
    c.parallelism = j.value("parallelism", 1);
    c.out = j.value("out", "out");
    c.record = j.value("record", "");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  if (!(c.epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  if (c.parallelism < 1) throw ConfigError("parallelism must be at least 1");
}

RunConfig load_run_config(const std::string& path) {
  const auto text = read_file(path);
  try {
    return nlohmann::json::parse(text).get<RunConfig>();
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ":" + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
}

std::shared_ptr<const PolicyModel> build_policy(const PolicySpec& spec, std::shared_ptr<HttpTransport> transport) {
  return build(spec, "", std::move(transport), "", nullptr);
}

EvalResult evaluate(const std::vector<Question>& suite, const PolicyModel& policy, double epsilon,
                    int parallelism) {
  std::vector<const Question*> order;
  for (const auto& q : suite) order.push_back(&q);
  std::sort(order.begin(), order.end(), [](const Question* a, const Question* b) { return a->id < b->id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->id == order[i - 1]->id) throw SuiteError("duplicate question id " + order[i]->id);
  }

  std::vector<QuestionResult> results(order.size());
  std::vector<std::exception_ptr> failures(order.size());
  std::vector<char> protocol(order.size(), 0);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < order.size(); i = next++) {
      const Question& q = *order[i];
      QuestionResult& r = results[i];
      r.id = q.id;
      r.qtype = q.qtype;
      r.correct = q.correct;
      r.steps = q.episode_prefix.steps.size();
      try {
        const auto answer = answer_question(q, policy, q.episode_prefix.world, epsilon);
        r.chosen = answer.chosen;
        r.is_correct = answer.chosen == q.correct;
        r.log_ratio = answer.log_ratio;
        r.tie = answer.tie;
        r.w2s_delta = likelihood_change_trace(answer.accumulator);
      } catch (const TransportError& e) {
        r.errored = true;
        r.error = e.what();
      } catch (const ProtocolError& e) {
        r.errored = true;
        r.error = e.what();
        protocol[i] = 1;
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, parallelism));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, std::max<std::size_t>(1, order.size())); ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  EvalResult out;
  out.policy = policy.descriptor();
  out.epsilon = epsilon;
  for (auto t : kAllQuestionTypes) out.by_type[t] = {};
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    for (TypeSummary* s : {&out.by_type[r.qtype], &out.overall}) {
      if (r.errored) {
        ++s->errored;
      } else {
        ++s->answered;
        if (r.is_correct) ++s->correct;
      }
    }
    out.protocol_errors += protocol[i];
  }
  out.results = std::move(results);
  return out;
}

double macro_accuracy(const EvalResult& result, bool belief_types) {
  double total = 0.0;
  int n = 0;
  for (const auto& [t, s] : result.by_type) {
    if (is_belief_type(t) != belief_types || s.answered == 0) continue;
    total += s.accuracy();
    ++n;
  }
  return n ? total / n : 0.0;
}

nlohmann::json result_to_json(const QuestionResult& r, const EvalResult& run) {
  nlohmann::json j{{"id", r.id},
                   {"qtype", qtype_name(r.qtype)},
                   {"correct", label_name(r.correct)},
                   {"epsilon", run.epsilon},
                   {"policy", run.policy},
                   {"steps", r.steps},
                   {"errored", r.errored}};
  if (r.errored) {
    j["chosen"] = nullptr;
    j["is_correct"] = nullptr;
    j["log_ratio"] = nullptr;
    j["tie"] = nullptr;
    j["error"] = r.error;
  } else {
    j["chosen"] = label_name(r.chosen);
    j["is_correct"] = r.is_correct;
    j["log_ratio"] = r.log_ratio;
    j["tie"] = r.tie;
    j["error"] = nullptr;
  }
  j["w2s_delta"] = r.w2s_delta ? nlohmann::json(*r.w2s_delta) : nlohmann::json(nullptr);
  return j;
}

void write_results_jsonl(const EvalResult& result, std::ostream& out) {
  for (const auto& r : result.results) out << result_to_json(r, result).dump() << '\n';
}

void write_table_csv(const EvalResult& result, std::ostream& out) {
  using T = QuestionType;
  out << "metric,1.1,1.2,1.3,belief-avg,2.1,2.2,2.3,2.4,goal-avg,all\n";
  auto group = [&](std::initializer_list<T> types) {
    TypeSummary s;
    for (auto t : types) {
      const auto& x = result.by_type.at(t);
      s.answered += x.answered;
      s.correct += x.correct;
      s.errored += x.errored;
    }
    return s;
  };
  const TypeSummary belief = group({T::T1_1, T::T1_2, T::T1_3});
  const TypeSummary goal = group({T::T2_1, T::T2_2, T::T2_3, T::T2_4});
  auto row = [&](const char* name, auto cell, auto belief_cell, auto goal_cell) {
    out << name;
    for (auto t : {T::T1_1, T::T1_2, T::T1_3}) out << ',' << cell(result.by_type.at(t));
    out << ',' << belief_cell;
    for (auto t : {T::T2_1, T::T2_2, T::T2_3, T::T2_4}) out << ',' << cell(result.by_type.at(t));
    out << ',' << goal_cell << ',' << cell(result.overall) << '\n';
  };
  row("accuracy", [](const TypeSummary& s) { return fixed(s.accuracy()); }, fixed(macro_accuracy(result, true)),
      fixed(macro_accuracy(result, false)));
  row("correct", [](const TypeSummary& s) { return std::to_string(s.correct); }, std::to_string(belief.correct),
      std::to_string(goal.correct));
  row("answered", [](const TypeSummary& s) { return std::to_string(s.answered); }, std::to_string(belief.answered),
      std::to_string(goal.answered));
  row("errored", [](const TypeSummary& s) { return std::to_string(s.errored); }, std::to_string(belief.errored),
      std::to_string(goal.errored));
}

std::vector<TraceRow> trace_series(const std::vector<QuestionResult>& results) {
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  bool any = false;
  for (const auto& r : results) {
    if (!r.w2s_delta) continue;
    any = true;
    const auto& d = *r.w2s_delta;
    if (d.size() > sums.size()) {
      sums.resize(d.size(), 0.0);
      counts.resize(d.size(), 0);
    }
    for (std::size_t s = 0; s < d.size(); ++s) {
      sums[s] += d[s];
      ++counts[s];
    }
  }
  if (!any) throw TraceAbsentError("run has no weak-to-strong trace (policy is not w2s)");
  std::vector<TraceRow> rows;
  for (std::size_t s = 0; s < sums.size(); ++s) rows.push_back({s, sums[s] / static_cast<double>(counts[s]), counts[s]});
  return rows;
}

std::vector<TraceRow> trace_from_results_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::vector<QuestionResult> results;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      QuestionResult r;
      r.id = j.at("id").get<std::string>();
      if (j.contains("w2s_delta") && !j["w2s_delta"].is_null()) r.w2s_delta = j["w2s_delta"].get<std::vector<double>>();
      results.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw SuiteError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return trace_series(results);
}

void write_trace_csv(const std::vector<TraceRow>& rows, std::ostream& out) {
  out << "step,mean_abs_delta,n_cases\n";
  for (const auto& r : rows) out << r.step << ',' << format_real(r.mean_abs_delta) << ',' << r.n_cases << '\n';
}

EvalResult eval_run(const RunConfig& config, std::shared_ptr<HttpTransport> transport) {
  if (config.suite.empty()) throw ConfigError("run config has no suite path");
  if (config.out.empty()) throw ConfigError("run config has no output directory");
  if (config.parallelism < 1) throw ConfigError("parallelism must be at least 1");
  if (!std::filesystem::exists(config.suite)) throw ConfigError("suite file not found: " + config.suite);

  std::vector<Recorder> recorders;
  const auto policy = build(config.policy, "", std::move(transport), config.record, &recorders);
  const auto suite = load_suite(config.suite);
  auto result = evaluate(suite, *policy, config.epsilon, config.parallelism);

  std::error_code ec;
  std::filesystem::create_directories(config.out, ec);
  if (ec) throw ConfigError("cannot create " + config.out + ": " + ec.message());
  const auto dir = std::filesystem::path(config.out);
  {
    std::ofstream out(dir / "results.jsonl", std::ios::binary);
    write_results_jsonl(result, out);
  }
  {
    std::ofstream out(dir / "table.csv", std::ios::binary);
    write_table_csv(result, out);
  }
  for (const auto& r : recorders) r.policy->recorded().save(r.path);
  return result;
}

}  // namespace bip
