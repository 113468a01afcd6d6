// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   bip_acceptance [--work DIR] [--seed N]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bip/harness.hpp"
#include "bip/scengen.hpp"
#include "bip/serialization.hpp"
#include "bip/simulate.hpp"
#include "bip/theorycheck.hpp"

using namespace bip;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// 1. incremental posterior vs direct product

// Connected graphs on n labelled rooms, one per isomorphism class.
std::vector<std::vector<std::pair<int, int>>> graph_classes(int n) {
  switch (n) {
    case 1: return {{}};
    case 2: return {{{0, 1}}};
    case 3: return {{{0, 1}, {1, 2}}, {{0, 1}, {1, 2}, {0, 2}}};
    case 4:
      return {{{0, 1}, {1, 2}, {2, 3}},                           // path
              {{0, 1}, {0, 2}, {0, 3}},                           // star
              {{0, 1}, {1, 2}, {2, 3}, {3, 0}},                   // cycle
              {{0, 1}, {1, 2}, {2, 0}, {2, 3}},                   // triangle with tail
              {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}},           // diamond
              {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};  // complete
  }
  return {};
}

std::vector<WorldModel> small_worlds() {
  const char* rooms[] = {"r0", "r1", "r2", "r3"};
  std::vector<WorldModel> out;
  for (int n = 1; n <= 4; ++n) {
    for (const auto& edges : graph_classes(n)) {
      for (int c = 0; c <= 2; ++c) {
        int hosts = 1;
        for (int i = 0; i < c; ++i) hosts *= n;
        for (int h = 0; h < hosts; ++h) {
          for (int m = 1; m <= 3; ++m) {
            WorldSpec spec;
            for (int r = 0; r < n; ++r) {
              spec.rooms.push_back(rooms[r]);
              spec.surfaces.push_back({std::string("s") + std::to_string(r), rooms[r]});
            }
            for (auto [a, b] : edges) spec.adjacency.emplace_back(rooms[a], rooms[b]);
            for (int i = 0, code = h; i < c; ++i, code /= n)
              spec.containers.push_back({"c" + std::to_string(i), rooms[code % n], true});
            for (int i = 0; i < m; ++i) spec.items.push_back("i" + std::to_string(i));
            out.emplace_back(spec);
          }
        }
      }
    }
  }
  return out;
}

Episode random_walk(const WorldModel& world, const WorldState& s0, const std::string& goal, int length, Rng& rng) {
  Episode ep{world, s0, {}, goal, 0, {}};
  WorldState s = s0;
  for (int t = 0; t < length; ++t) {
    const auto acts = legal_actions(s, world);
    const auto a = acts[rng.below(acts.size())];
    s = transition(s, a, world);
    ep.steps.push_back({a, s, observe(s, world)});
  }
  return ep;
}

Outcome criterion_posterior_oracle() {
  const auto t0 = Clock::now();
  const double eps = kDefaultEpsilon;
  const OraclePolicy policy(0.5);
  const auto worlds = small_worlds();
  std::size_t episodes = 0, comparisons = 0;
  double worst = 0.0;
  for (std::size_t w = 0; w < worlds.size(); ++w) {
    const auto& world = worlds[w];
    Rng rng(derive_seed(1, w));
    // every start room x goal x {simulated agent, random walk}
    const auto n_items = world.items().size();
    const auto n_variants = 2 * n_items * world.rooms().size();
    for (std::size_t variant = 0; variant < n_variants; ++variant) {
      std::map<std::string, std::string> placement;
      for (const auto& item : world.items()) placement[item] = world.locations()[rng.below(world.locations().size())];
      const auto s0 = make_state(world, world.rooms()[variant / (2 * n_items)], placement);
      const auto& goal = world.items()[(variant / 2) % n_items];
      const int length = 1 + static_cast<int>(rng.below(6));
      const Episode ep = variant % 2 == 0 ? simulate_episode(world, goal, s0, 0.5, length, rng())
                                          : random_walk(world, s0, goal, length, rng);
      ++episodes;

      // Hypotheses: every goal (at least two), random priors, and per-hypothesis
      // belief trajectories where odd hypotheses swap in an arbitrary belief at
      // one step.
      std::vector<Hypothesis> hyps;
      for (const auto& g : world.items()) hyps.push_back({g, std::nullopt, rng.normal()});
      if (hyps.size() < 2) hyps.push_back({world.items()[0], BeliefHypothesis{world.items()[0], world.locations()[0], true}, rng.normal()});
      const std::size_t H = hyps.size();
      const std::size_t T = ep.steps.size();

      // tracked[t] = belief after observing the state acted on at step t
      std::vector<BeliefState> tracked;
      std::vector<Observation> obs;
      std::vector<WorldState> states;
      BeliefState b0 = init_belief(world, world.items());
      {
        WorldState s = ep.initial_state;
        Observation o = observe(s, world);
        BeliefState b = update_belief(b0, o, world);
        for (std::size_t t = 0; t < T; ++t) {
          states.push_back(s);
          obs.push_back(o);
          tracked.push_back(b);
          s = ep.steps[t].state;
          o = ep.steps[t].observation;
          b = update_belief(b, o, world);
        }
      }
      // per hypothesis: belief sequence beliefs[h][0..T] with beliefs[h][0] = b0
      std::vector<std::vector<BeliefState>> beliefs(H);
      for (std::size_t h = 0; h < H; ++h) {
        beliefs[h].push_back(b0);
        const std::size_t swap_at = (h % 2 == 1) ? rng.below(T) : T;
        for (std::size_t t = 0; t < T; ++t) {
          if (t == swap_at) {
            BeliefState alt = init_belief(world, world.items());
            const auto& item = world.items()[rng.below(world.items().size())];
            const auto& loc = world.locations()[rng.below(world.locations().size())];
            alt.per_item[item] = ItemBelief{{loc}, {1.0}};
            beliefs[h].push_back(alt);
          } else {
            beliefs[h].push_back(tracked[t]);
          }
        }
      }

      auto acc = init_accumulator(hyps, world, eps);
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<BeliefTransition> bt;
        for (std::size_t h = 0; h < H; ++h) bt.push_back({beliefs[h][t], beliefs[h][t + 1], obs[t]});
        acc = step_update(acc, ep.steps[t].action, states[t], bt, policy, world);
      }

      // direct product, normalized once
      std::vector<double> direct(H);
      for (std::size_t h = 0; h < H; ++h) {
        double total = hyps[h].prior_log;
        for (std::size_t t = 0; t < T; ++t) {
          const auto q = PolicyQuery{states[t], beliefs[h][t + 1], hyps[h].goal, legal_actions(states[t], world)};
          const auto probs = policy.score(q, world).dist.probs;
          const auto idx = static_cast<std::size_t>(
              std::find(q.candidates.begin(), q.candidates.end(), ep.steps[t].action) - q.candidates.begin());
          const bool consistent = beliefs[h][t + 1] == update_belief(beliefs[h][t], obs[t], world);
          total += std::log(probs[idx] + eps) + std::log(consistent ? 1.0 : kDefaultBeliefFloor);
        }
        direct[h] = total;
      }
      double m = -1e300;
      for (double v : direct) m = std::max(m, v);
      double z = 0.0;
      for (double v : direct) z += std::exp(v - m);
      for (std::size_t h = 0; h < H; ++h) {
        const double expected = direct[h] - m - std::log(z);
        worst = std::max(worst, std::abs(acc.log_posteriors()[h] - expected));
        ++comparisons;
      }
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst <= 1e-9 && secs < 60.0;
  o.detail = std::to_string(worlds.size()) + " worlds, " + std::to_string(episodes) + " episodes, " +
             std::to_string(comparisons) + " comparisons, max |diff| " + fmt("%.3g", worst) + ", " +
             fmt("%.1f", secs) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 2. weak-to-strong identities

Outcome criterion_w2s() {
  Rng rng(2);
  double identity = 0.0, norm = 0.0, scale = 0.0;
  auto dist = [&](std::size_t n) {
    std::vector<double> v(n);
    double s = 0.0;
    for (auto& x : v) s += x = 1e-3 + rng.uniform();
    for (auto& x : v) x /= s;
    return ActionDistribution{v};
  };
  for (int i = 0; i < 10000; ++i) {
    const auto n = static_cast<std::size_t>(rng.between(2, 12));
    const auto large = dist(n), expert = dist(n), naive = dist(n);
    const auto same = w2s_combine(large, expert, expert);
    for (std::size_t k = 0; k < n; ++k) identity = std::max(identity, std::abs(same.probs[k] - large.probs[k]));
    const auto out = w2s_combine(large, expert, naive);
    double s = 0.0;
    for (double x : out.probs) s += x;
    norm = std::max(norm, std::abs(s - 1.0));
    ActionDistribution scaled = expert;
    const double c = 0.01 + 100.0 * rng.uniform();
    for (auto& x : scaled.probs) x *= c;
    const auto rescaled = w2s_combine(large, scaled, naive);
    for (std::size_t k = 0; k < n; ++k) scale = std::max(scale, std::abs(rescaled.probs[k] - out.probs[k]));
  }
  const auto worked = w2s_combine({{0.6, 0.4}}, {{0.9, 0.1}}, {{0.5, 0.5}});
  const bool worked_ok = std::abs(worked.probs[0] - 0.93103) <= 1e-5 && std::abs(worked.probs[1] - 0.06897) <= 1e-5;
  Outcome o;
  o.pass = identity <= 1e-12 && norm <= 1e-9 && scale <= 1e-12 && worked_ok;
  o.detail = "identity " + fmt("%.2g", identity) + ", sum " + fmt("%.2g", norm) + ", rescale " + fmt("%.2g", scale) +
             ", worked [" + fmt("%.5f", worked.probs[0]) + ", " + fmt("%.5f", worked.probs[1]) + "]";
  return o;
}

// ---------------------------------------------------------------------------
// 3. KL bound Monte-Carlo

Outcome criterion_theorem(std::uint64_t seed, const fs::path& dir) {
  const auto t0 = Clock::now();
  const std::vector<std::size_t> ks{2, 8, 64};
  const std::vector<double> etas{1e-3, 1e-2, 1e-1};
  const auto grid = theory::run_trials(ks, etas, 1000, seed);
  const double slope = theory::fitted_slope(grid);
  const auto hand = theory::bound_trial({{0.0, 0.0}, 0}, 0.1);
  const bool hand_ok = std::abs(hand.bound - 1.25e-3) < 1e-12 && std::abs(hand.kl - 7.8e-7) < 0.01e-7 && hand.kl <= hand.bound;
  {
    std::ofstream out(dir / "theorem.csv", std::ios::binary);
    theory::write_csv(grid, out);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = grid.total_violations() == 0 && slope >= 3.5 && hand_ok && secs < 30.0;
  o.detail = std::to_string(grid.trials.size()) + " trials, " + std::to_string(grid.total_violations()) +
             " violations, slope " + fmt("%.3f", slope) + ", hand kl " + fmt("%.3g", hand.kl) + " bound " +
             fmt("%.3g", hand.bound) + ", " + fmt("%.1f", secs) + " s";
  return o;
}

// ---------------------------------------------------------------------------
// 4. gradient vs finite differences

Outcome criterion_gradient() {
  Rng rng(4);
  double worst = 0.0;
  for (std::size_t k : {2, 8, 64}) {
    for (int trial = 0; trial < 100; ++trial) {
      theory::LogitVector l;
      for (std::size_t i = 0; i < k; ++i) l.values.push_back(rng.normal());
      l.target = rng.below(k);
      const auto g = theory::ce_gradient(l);
      for (std::size_t i = 0; i < k; ++i) {
        auto up = l, down = l;
        up.values[i] += 1e-5;
        down.values[i] -= 1e-5;
        worst = std::max(worst, std::abs((theory::ce_loss(up) - theory::ce_loss(down)) / 2e-5 - g[i]));
      }
    }
  }
  return {worst <= 1e-6, "300 instances, max |fd - grad| " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------------------
// 5-8 share the suite and write their outputs under one directory per pass.

void write_run(const EvalResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream a(dir / "results.jsonl", std::ios::binary);
  write_results_jsonl(r, a);
  std::ofstream b(dir / "table.csv", std::ios::binary);
  write_table_csv(r, b);
}

struct SuiteOutcomes {
  Outcome closed_loop, w2s_gap, trace, transfer;
};

SuiteOutcomes suite_criteria(std::uint64_t seed, int parallelism, const fs::path& dir) {
  SuiteOutcomes out;
  fs::create_directories(dir);
  const auto suite = generate_suite(default_gen_config(seed));
  save_suite((dir / "suite.json").string(), suite);

  // 5
  {
    const auto t0 = Clock::now();
    const OraclePolicy oracle(0.5);
    const auto r = evaluate(suite, oracle, kDefaultEpsilon, parallelism);
    const double secs = seconds_since(t0);
    write_run(r, dir / "closed_loop");
    double worst = 1.0;
    std::string per_type;
    for (const auto& [t, s] : r.by_type) {
      worst = std::min(worst, s.accuracy());
      per_type += " " + qtype_name(t) + "=" + fmt("%.3f", s.accuracy());
    }
    out.closed_loop.pass = r.overall.accuracy() >= 0.90 && worst >= 0.80 && (parallelism > 1 || secs < 120.0) &&
                           r.overall.answered == static_cast<int>(suite.size());
    out.closed_loop.detail = "overall " + fmt("%.3f", r.overall.accuracy()) + ";" + per_type + "; " +
                             fmt("%.1f", secs) + " s";
  }

  // 6 and 7
  {
    const OraclePolicy naive_large(2.0);
    auto large = std::make_shared<OraclePolicy>(2.0);
    auto expert = std::make_shared<OraclePolicy>(0.3);
    auto naive = std::make_shared<OraclePolicy>(2.0);
    const W2SPolicy w2s(large, expert, naive);
    const auto base = evaluate(suite, naive_large, kDefaultEpsilon, parallelism);
    const auto combined = evaluate(suite, w2s, kDefaultEpsilon, parallelism);
    write_run(base, dir / "naive_large");
    write_run(combined, dir / "w2s");
    const double gap = combined.overall.accuracy() - base.overall.accuracy();
    out.w2s_gap.pass = gap >= 0.05;
    out.w2s_gap.detail = "w2s " + fmt("%.3f", combined.overall.accuracy()) + " vs naive-large " +
                         fmt("%.3f", base.overall.accuracy()) + ", gap " + fmt("%+.1f", 100.0 * gap) +
                         " pp (need >= +5.0)";

    const auto rows = trace_from_results_jsonl((dir / "w2s" / "results.jsonl").string());
    {
      std::ofstream t(dir / "trace.csv", std::ios::binary);
      write_trace_csv(rows, t);
    }
    bool nonneg = !rows.empty();
    for (const auto& row : rows) nonneg &= row.mean_abs_delta >= 0.0;
    const std::size_t third = std::max<std::size_t>(1, rows.size() / 3);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < third && i < rows.size(); ++i) first += rows[i].mean_abs_delta;
    for (std::size_t i = rows.size() - std::min(third, rows.size()); i < rows.size(); ++i) last += rows[i].mean_abs_delta;
    first /= static_cast<double>(third);
    last /= static_cast<double>(third);
    out.trace.pass = nonneg && last >= first;
    out.trace.detail = std::to_string(rows.size()) + " steps, first-third mean " + fmt("%.4f", first) +
                       ", last-third mean " + fmt("%.4f", last) + (nonneg ? ", nonnegative" : ", NEGATIVE entries");
  }

  // 8
  {
    const OraclePolicy oracle(0.5);
    const auto source = evaluate(suite, oracle, kDefaultEpsilon, parallelism);
    bool all_equal = true;
    std::string detail;
    for (const auto& theme : builtin_themes()) {
      const auto themed = retheme(suite, theme);
      save_suite((dir / ("suite." + theme.id + ".json")).string(), themed);
      const auto r = evaluate(themed, oracle, kDefaultEpsilon, parallelism);
      write_run(r, dir / ("theme." + theme.id));
      bool same = r.overall.accuracy() == source.overall.accuracy();
      for (const auto& [t, s] : r.by_type) same &= s.accuracy() == source.by_type.at(t).accuracy();
      for (std::size_t i = 0; i < r.results.size(); ++i) {
        same &= r.results[i].chosen == source.results[i].chosen && r.results[i].log_ratio == source.results[i].log_ratio;
      }
      all_equal &= same;
      detail += " " + theme.id + (same ? "=" : "!=");
    }
    out.transfer.pass = all_equal;
    out.transfer.detail = "source " + fmt("%.3f", source.overall.accuracy()) + ";" + detail;
  }
  return out;
}

// ---------------------------------------------------------------------------
// 9. byte-identical outputs across a repeat at parallelism 8

Outcome compare_trees(const fs::path& a, const fs::path& b) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a).string());
  }
  std::sort(files.begin(), files.end());
  std::size_t differing = 0;
  std::string first_diff;
  for (const auto& f : files) {
    if (!fs::exists(b / f) || slurp(a / f) != slurp(b / f)) {
      if (first_diff.empty()) first_diff = f;
      ++differing;
    }
  }
  std::size_t other = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) other += e.is_regular_file();
  Outcome o;
  o.pass = differing == 0 && other == files.size() && !files.empty();
  o.detail = std::to_string(files.size()) + " files compared, " + std::to_string(differing) + " differ" +
             (first_diff.empty() ? "" : " (first: " + first_diff + ")");
  return o;
}

void report(int id, const char* name, const Outcome& o, int& failures) {
  std::printf("[%s] criterion %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
  failures += o.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "bip_acceptance";
  std::uint64_t seed = 0;
  for (int i = 1; i + 1 < argc; i += 2) {
    if (std::strcmp(argv[i], "--work") == 0) work = argv[i + 1];
    else if (std::strcmp(argv[i], "--seed") == 0) seed = std::stoull(argv[i + 1]);
    else {
      std::fprintf(stderr, "usage: %s [--work DIR] [--seed N]\n", argv[0]);
      return 2;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);

  int failures = 0;
  report(1, "posterior-oracle equivalence", criterion_posterior_oracle(), failures);
  report(2, "w2s identity and normalization", criterion_w2s(), failures);
  report(3, "KL bound Monte-Carlo", criterion_theorem(seed, work), failures);
  report(4, "gradient correctness", criterion_gradient(), failures);

  const auto pass1 = suite_criteria(seed, 1, work / "pass1");
  report(5, "closed-loop inference accuracy", pass1.closed_loop, failures);
  report(6, "w2s beats naive-large by 5 pp", pass1.w2s_gap, failures);
  report(7, "likelihood-change trace grows", pass1.trace, failures);
  report(8, "transfer invariance under themes", pass1.transfer, failures);

  const auto pass2 = suite_criteria(seed, 8, work / "pass2");
  auto det = compare_trees(work / "pass1", work / "pass2");
  const bool repeat_same = pass1.closed_loop.pass == pass2.closed_loop.pass && pass1.w2s_gap.pass == pass2.w2s_gap.pass &&
                           pass1.trace.pass == pass2.trace.pass && pass1.transfer.pass == pass2.transfer.pass;
  det.pass &= repeat_same;
  det.detail += ", repeat at parallelism 8";
  report(9, "determinism", det, failures);

  std::printf("%d of 9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
