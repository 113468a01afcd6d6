// SPDX-License-Identifier: Apache-2.0
//
// bip: gen | eval | theorem | trace | retheme
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "bip/harness.hpp"
#include "bip/scengen.hpp"
#include "bip/serialization.hpp"
#include "bip/theorycheck.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSuite = 3;
constexpr int kExitRemote = 4;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
};

bip::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw bip::ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto text = ss.str();
  try {
    return bip::json::parse(text);
  } catch (const bip::json::parse_error& e) {
    throw bip::ConfigError(path + ":" + std::to_string(bip::line_of_offset(text, e.byte)) + ": " + e.what());
  }
}

std::string derived_fixture(const std::string& base, const char* role) {
  std::string stem = base;
  if (stem.ends_with(".jsonl")) stem.resize(stem.size() - 6);
  return stem + "." + role + ".jsonl";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inverse planning toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--out", g.out, "output file or directory");
  app.add_option("--config", g.config, "JSON config (GenConfig for gen, RunConfig for eval)");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a question suite");
  std::optional<int> gen_n;
  std::optional<std::string> gen_theme;
  std::optional<double> gen_temperature;
  gen->add_option("-n,--questions", gen_n, "suite size (balanced mix)");
  gen->add_option("--theme", gen_theme, "theme id");
  gen->add_option("--temperature", gen_temperature, "agent temperature");

  // eval
  auto* eval = app.add_subcommand("eval", "answer a suite with a policy");
  std::optional<std::string> ev_suite, ev_policy, ev_record, ev_replay, ev_large, ev_expert, ev_naive;
  std::optional<double> ev_temperature, ev_epsilon;
  std::optional<int> ev_parallelism;
  eval->add_option("--suite", ev_suite, "suite JSON");
  eval->add_option("--policy", ev_policy, "oracle | remote | w2s")
      ->check(CLI::IsMember({"oracle", "remote", "w2s"}));
  eval->add_option("--temperature", ev_temperature, "oracle temperature");
  eval->add_option("--epsilon", ev_epsilon, "likelihood smoothing");
  eval->add_option("-j,--parallelism", ev_parallelism, "worker threads");
  eval->add_option("--record", ev_record, "record leaf policies to this fixture file");
  eval->add_option("--replay", ev_replay, "replay leaf policies from this fixture file");
  eval->add_option("--large-url", ev_large, "large model endpoint (else BIP_LARGE_URL)");
  eval->add_option("--expert-url", ev_expert, "expert model endpoint (else BIP_EXPERT_URL)");
  eval->add_option("--naive-url", ev_naive, "naive model endpoint (else BIP_NAIVE_URL)");

  // theorem
  auto* theorem = app.add_subcommand("theorem", "Monte-Carlo check of the KL bound");
  int th_trials = 1000;
  std::vector<std::size_t> th_k{2, 8, 64};
  std::vector<double> th_eta{1e-3, 1e-2, 1e-1};
  double th_slack = 10.0;
  theorem->add_option("--trials", th_trials, "trials per cell")->check(CLI::PositiveNumber);
  theorem->add_option("--k", th_k, "vocabulary sizes")->delimiter(',');
  theorem->add_option("--eta", th_eta, "step sizes")->delimiter(',');
  theorem->add_option("--slack", th_slack, "constant c of the c*eta^3 slack");

  // trace
  auto* trace = app.add_subcommand("trace", "export the weak-to-strong likelihood-change trace of a run");
  std::string tr_run;
  trace->add_option("--run", tr_run, "eval output directory or its results.jsonl")->required();

  // retheme
  auto* rt = app.add_subcommand("retheme", "rename a suite's ids through a theme");
  std::string rt_suite, rt_theme;
  bool rt_inverse = false;
  rt->add_option("--suite", rt_suite, "suite JSON")->required();
  rt->add_option("--theme", rt_theme, "builtin theme id or theme JSON file")->required();
  rt->add_flag("--inverse", rt_inverse, "apply the inverse map");

  for (auto* sub : {gen, eval, theorem, trace, rt}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      bip::GenConfig cfg = bip::default_gen_config();
      if (!g.config.empty()) cfg = read_json_file(g.config).get<bip::GenConfig>();
      if (g.seed) cfg.rng_seed = *g.seed;
      if (gen_n) {
        cfg.n_questions = *gen_n;
        cfg.qtype_mix = bip::balanced_mix(*gen_n);
      }
      if (gen_theme) cfg.theme = *gen_theme;
      if (gen_temperature) cfg.agent_temperature = *gen_temperature;
      try {
        bip::validate_gen_config(cfg);
        if (cfg.theme != "apartment") bip::find_theme(cfg.theme);
      } catch (const bip::StructuralError& e) {
        throw bip::ConfigError(e.what());
      }
      const auto suite = bip::generate_suite(cfg);
      const std::string out = g.out.empty() ? "suite.json" : g.out;
      bip::save_suite(out, suite);
      std::cerr << "wrote " << suite.size() << " questions to " << out << "\n";
      return kExitOk;
    }

    if (eval->parsed()) {
      bip::RunConfig cfg;
      if (!g.config.empty()) cfg = bip::load_run_config(g.config);
      if (ev_suite) cfg.suite = *ev_suite;
      if (!g.out.empty()) cfg.out = g.out;
      if (ev_epsilon) cfg.epsilon = *ev_epsilon;
      if (ev_parallelism) cfg.parallelism = *ev_parallelism;
      if (ev_record) cfg.record = *ev_record;
      if (ev_policy) {
        if (*ev_policy == "oracle") {
          cfg.policy = bip::PolicySpec::oracle(ev_temperature.value_or(0.5));
        } else if (*ev_policy == "remote") {
          cfg.policy = bip::PolicySpec::remote(ev_large.value_or(""));
        } else {
          cfg.policy = bip::PolicySpec::w2s(bip::PolicySpec::remote(ev_large.value_or("")),
                                            bip::PolicySpec::remote(ev_expert.value_or("")),
                                            bip::PolicySpec::remote(ev_naive.value_or("")));
        }
      } else if (ev_temperature && cfg.policy.kind == bip::PolicySpec::Kind::Oracle) {
        cfg.policy.temperature = *ev_temperature;
      }
      if (ev_replay) {
        if (cfg.policy.kind == bip::PolicySpec::Kind::W2S) {
          cfg.policy = bip::PolicySpec::w2s(bip::PolicySpec::fixture(derived_fixture(*ev_replay, "large")),
                                            bip::PolicySpec::fixture(derived_fixture(*ev_replay, "expert")),
                                            bip::PolicySpec::fixture(derived_fixture(*ev_replay, "naive")));
        } else {
          cfg.policy = bip::PolicySpec::fixture(*ev_replay);
        }
      }
      if (cfg.parallelism < 1) throw bip::ConfigError("parallelism must be at least 1");
      const auto result = bip::eval_run(cfg);
      std::cerr << "answered " << result.overall.answered << ", errored " << result.overall.errored
                << ", accuracy " << bip::format_real(result.overall.accuracy(), 6) << " -> " << cfg.out << "\n";
      if (result.protocol_errors > 0) {
        std::cerr << "error: " << result.protocol_errors << " question(s) hit remote protocol errors\n";
        return kExitRemote;
      }
      return kExitOk;
    }

    if (theorem->parsed()) {
      const auto grid = bip::theory::run_trials(th_k, th_eta, th_trials, g.seed.value_or(0), th_slack);
      if (g.out.empty()) {
        bip::theory::write_csv(grid, std::cout);
      } else {
        std::ofstream out(g.out, std::ios::binary);
        if (!out) throw bip::ConfigError("cannot write " + g.out);
        bip::theory::write_csv(grid, out);
      }
      std::cerr << "violations " << grid.total_violations() << ", fitted slope "
                << bip::format_real(bip::theory::fitted_slope(grid), 6) << "\n";
      return grid.total_violations() == 0 ? kExitOk : kExitFailure;
    }

    if (trace->parsed()) {
      auto path = std::filesystem::path(tr_run);
      if (std::filesystem::is_directory(path)) path /= "results.jsonl";
      const auto rows = bip::trace_from_results_jsonl(path.string());
      if (g.out.empty()) {
        bip::write_trace_csv(rows, std::cout);
      } else {
        std::ofstream out(g.out, std::ios::binary);
        if (!out) throw bip::ConfigError("cannot write " + g.out);
        bip::write_trace_csv(rows, out);
      }
      return kExitOk;
    }

    if (rt->parsed()) {
      bip::ThemeMap theme;
      if (std::filesystem::is_regular_file(rt_theme)) {
        theme = read_json_file(rt_theme).get<bip::ThemeMap>();
      } else {
        try {
          theme = bip::find_theme(rt_theme);
        } catch (const bip::StructuralError& e) {
          throw bip::ConfigError(e.what());
        }
      }
      if (rt_inverse) theme = bip::invert(theme);
      const auto suite = bip::retheme(bip::load_suite(rt_suite), theme);
      const std::string out = g.out.empty() ? "suite." + theme.id + ".json" : g.out;
      bip::save_suite(out, suite);
      std::cerr << "wrote " << suite.size() << " questions to " << out << "\n";
      return kExitOk;
    }
  } catch (const bip::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bip::SuiteError& e) {
    std::cerr << "suite error: " << e.what() << "\n";
    return kExitSuite;
  } catch (const bip::ReplayMissError& e) {
    std::cerr << "remote error: " << e.what() << "\n";
    return kExitRemote;
  } catch (const bip::ProtocolError& e) {
    std::cerr << "remote error: " << e.what() << "\n";
    return kExitRemote;
  } catch (const bip::TransportError& e) {
    std::cerr << "remote error: " << e.what() << "\n";
    return kExitRemote;
  } catch (const bip::TraceAbsentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSuite;
  } catch (const bip::GenerationError& e) {
    std::cerr << "generation error: " << e.what() << "\n";
    return kExitSuite;
  } catch (const bip::StructuralError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSuite;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
