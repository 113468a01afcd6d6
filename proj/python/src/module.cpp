// Python bindings. Structured values cross the boundary as JSON text; the
// bip package converts to and from Python objects.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "bip/harness.hpp"
#include "bip/scengen.hpp"
#include "bip/serialization.hpp"
#include "bip/simulate.hpp"
#include "bip/theorycheck.hpp"

namespace py = pybind11;
using namespace bip;

namespace {

std::vector<double> w2s(const std::vector<double>& large, const std::vector<double>& expert,
                        const std::vector<double>& naive) {
  return w2s_combine({large}, {expert}, {naive}).probs;
}

std::string generate(const std::string& config) {
  const auto cfg = json::parse(config).get<GenConfig>();
  return suite_to_json(generate_suite(cfg)).dump();
}

std::string simulate(const std::string& world, const std::string& goal, const std::string& state, double temperature,
                     int horizon, std::uint64_t seed) {
  const auto w = world_from_json(json::parse(world));
  const auto s = json::parse(state).get<WorldState>();
  validate_state(s, w);
  return json(simulate_episode(w, goal, s, temperature, horizon, seed)).dump();
}

std::string answer(const std::string& question, const std::string& policy, double epsilon) {
  const auto q = question_from_json(json::parse(question));
  const auto p = build_policy(json::parse(policy).get<PolicySpec>());
  const auto a = answer_question(q, *p, q.episode_prefix.world, epsilon);
  json out{{"chosen", a.chosen == Label::A ? "A" : "B"},
           {"log_ratio", a.log_ratio},
           {"tie", a.tie},
           {"log_posteriors", a.accumulator.log_posteriors()}};
  if (const auto trace = likelihood_change_trace(a.accumulator)) out["w2s_delta"] = *trace;
  return out.dump();
}

py::dict evaluate_suite(const std::string& suite, const std::string& policy, double epsilon, int parallelism) {
  const auto questions = suite_from_json(json::parse(suite));
  const auto p = build_policy(json::parse(policy).get<PolicySpec>());
  EvalResult r;
  {
    py::gil_scoped_release release;
    r = evaluate(questions, *p, epsilon, parallelism);
  }
  std::ostringstream results, table;
  write_results_jsonl(r, results);
  write_table_csv(r, table);
  py::dict out;
  out["results_jsonl"] = results.str();
  out["table_csv"] = table.str();
  out["accuracy"] = r.overall.accuracy();
  out["protocol_errors"] = r.protocol_errors;
  return out;
}

std::string retheme_suite(const std::string& suite, const std::string& theme_id, bool inverse) {
  const auto theme = find_theme(theme_id);
  return suite_to_json(retheme(suite_from_json(json::parse(suite)), inverse ? invert(theme) : theme)).dump();
}

std::string theorem(const std::vector<std::size_t>& ks, const std::vector<double>& etas, int trials,
                    std::uint64_t seed, double slack) {
  const auto grid = theory::run_trials(ks, etas, trials, seed, slack);
  std::ostringstream csv;
  theory::write_csv(grid, csv);
  return json{{"violations", grid.total_violations()}, {"slope", theory::fitted_slope(grid)}, {"csv", csv.str()}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  // Translators run newest first, so bases are registered before subclasses.
  auto structural = py::register_exception<StructuralError>(m, "StructuralError", PyExc_ValueError);
  py::register_exception<SuiteError>(m, "SuiteError", structural.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);

  m.def("boltzmann", [](const std::vector<double>& v, double t) { return boltzmann(v, t); }, py::arg("values"),
        py::arg("temperature"));
  m.def("w2s_combine", &w2s, py::arg("large"), py::arg("expert"), py::arg("naive"));
  m.def("ce_gradient", [](const std::vector<double>& l, std::size_t target) {
    return theory::ce_gradient({l, target});
  }, py::arg("logits"), py::arg("target"));
  m.def("kl_bound_trial", [](const std::vector<double>& l, std::size_t target, double eta) {
    const auto r = theory::bound_trial({l, target}, eta);
    return py::dict(py::arg("kl") = r.kl, py::arg("bound") = r.bound, py::arg("lambda_max") = r.lambda_max,
                    py::arg("grad_norm_sq") = r.grad_norm_sq);
  }, py::arg("logits"), py::arg("target"), py::arg("eta"));
  m.def("theorem_json", &theorem, py::arg("ks"), py::arg("etas"), py::arg("trials"), py::arg("seed"),
        py::arg("slack") = 10.0);
  m.def("generate_suite_json", &generate, py::arg("config"));
  m.def("simulate_episode_json", &simulate, py::arg("world"), py::arg("goal"), py::arg("state"),
        py::arg("temperature"), py::arg("horizon"), py::arg("seed"));
  m.def("answer_question_json", &answer, py::arg("question"), py::arg("policy"), py::arg("epsilon") = kDefaultEpsilon);
  m.def("evaluate_json", &evaluate_suite, py::arg("suite"), py::arg("policy"), py::arg("epsilon") = kDefaultEpsilon,
        py::arg("parallelism") = 1);
  m.def("retheme_json", &retheme_suite, py::arg("suite"), py::arg("theme"), py::arg("inverse") = false);
  m.def("theme_ids", [] {
    std::vector<std::string> ids;
    for (const auto& t : builtin_themes()) ids.push_back(t.id);
    return ids;
  });
}
