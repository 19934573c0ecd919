// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.
//   acceptance [--work DIR] [--only 1,2,...] [--seeds N] [--steps N]
// Finished training runs under DIR are reused when their saved config matches.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hrac/adjacency.hpp"
#include "hrac/agent.hpp"
#include "hrac/embed.hpp"
#include "hrac/harness.hpp"
#include "hrac/oracle.hpp"
#include "support/gradcheck.hpp"

using namespace hrac;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(int id, bool pass, const std::string& what) {
  std::printf("CRITERION %d %s: %s\n", id, pass ? "PASS" : "FAIL", what.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string f3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void oracle_suite() {
  const auto t0 = Clock::now();
  const auto rep = oracle::run_suite({});
  const double secs = seconds_since(t0);
  std::ostringstream o;
  o << rep.fixtures << " MDPs; triangle " << rep.triangle_failures << "/" << rep.triangle_checks << ", theorem 1 "
    << rep.theorem1_failures << "/" << rep.theorem1_checks << ", theorem 2 " << rep.theorem2_failures << "/"
    << rep.theorem2_checks << " failed; " << f3(secs) << " s";
  for (const auto& f : rep.failures) std::printf("  %s\n", f.c_str());
  verdict(1, rep.ok() && rep.fixtures == 100 && secs <= 300.0, o.str());
}

void gradients() {
  const auto reports = gradcheck::run(50, 64, 2024);
  bool ok = true;
  std::ostringstream o;
  for (const auto& r : reports) {
    ok = ok && r.points == 50 && r.checked > 0 && r.worst <= 1e-4;
    o << r.name << " " << f3(r.worst) << " (" << r.checked << " checked, " << r.kinks << " kinks); ";
  }
  verdict(2, ok, "max relative error per network: " + o.str());
}

void matrix_convergence() {
  const auto env = make_maze_config(0.0);
  const auto graph = grid_graph(env.layout);
  const auto d = oracle::shortest_transition_distance(graph.mdp);
  const int k = 10;
  Rng rng(31337);
  std::uniform_int_distribution<int> act(0, kNumActions - 1);
  adjacency::AdjacencyMatrix m(k);
  for (int e = 0; e < 1000; ++e) {
    adjacency::Trajectory t;
    auto s = reset(env, rng);
    t.states.push_back(s.cell());
    for (int i = 0;; ++i) {
      const auto r = step(env, s, act(rng), i, rng);
      s = r.next_state;
      t.states.push_back(s.cell());
      if (r.done) break;
    }
    m.update(t);
  }
  long fp = 0, fn = 0, pairs = 0;
  std::map<int, long> fn_by_distance;
  for (int i = 0; i < m.size(); ++i) {
    for (int j = i + 1; j < m.size(); ++j) {
      const int a = graph.state_of(m.cells()[i]), b = graph.state_of(m.cells()[j]);
      const int dist = std::min(d(a, b), d(b, a));
      const bool truth = dist <= k;
      ++pairs;
      if (m.get(i, j) && !truth) ++fp;
      if (!m.get(i, j) && truth) {
        ++fn;
        ++fn_by_distance[dist];
      }
    }
  }
  std::ostringstream o;
  o << m.size() << " visited cells of " << graph.cells.size() << ", " << pairs << " pairs; " << fp
    << " learned-but-not-adjacent, " << fn << " adjacent-but-not-learned";
  if (fn) {
    o << " (by shortest distance:";
    for (const auto& [dist, n] : fn_by_distance) o << " d" << dist << "=" << n;
    o << ")";
  }
  verdict(3, fp == 0 && fn == 0, o.str());
}

void distillation() {
  const auto t0 = Clock::now();
  const auto env = make_maze_config(0.0);
  const auto graph = grid_graph(env.layout);
  const auto d = oracle::shortest_transition_distance(graph.mdp);
  const auto m = adjacency::from_dense(10, graph.cells, oracle::perfect_adjacency_matrix(d, 10, true));
  Rng rng(4);
  auto psi = embed::AdjacencyNet::create({}, {env.layout.width(), env.layout.height()}, rng);
  nn::AdamState adam(psi.net, {2e-4});
  const auto holdout = adjacency::make_holdout(m, 0.1, rng);
  embed::DistillOptions opts;  // 50 epochs x 100 batches x 64 pairs
  opts.holdout = &holdout;
  const auto st = embed::distill(psi, adam, m, opts, rng);
  const auto train = embed::evaluate(psi, m, embed::PairSubset::Training, &holdout);
  const auto held = embed::evaluate(psi, m, embed::PairSubset::Holdout, &holdout);
  const double secs = seconds_since(t0);
  std::ostringstream o;
  o << "training accuracy " << f3(train.accuracy()) << " (balanced " << f3(train.balanced_accuracy()) << ", fn "
    << train.fn << ", fp " << train.fp << "), held-out " << f3(held.accuracy()) << " (balanced "
    << f3(held.balanced_accuracy()) << "), final loss " << f3(st.epoch_loss.back()) << ", " << f3(secs) << " s";
  verdict(4, train.accuracy() >= 0.99 && held.accuracy() >= 0.95 && secs <= 600.0, o.str());
}

void identities() {
  bool ok = embed::hinge(10, 10) == 0.0 && embed::hinge(20, 10) == 1.0;
  const GridState s{3, 5, false};
  ok = ok && agent::intrinsic_reward(s, {3.0, 5.0}) == 1.0 && agent::intrinsic_reward(s, {3.5, 5.0}) == 1.0 &&
       agent::intrinsic_reward(s, {4.0, 5.0}) == 0.0 && agent::intrinsic_reward(s, {2.5, 4.5}) == 1.0 &&
       agent::intrinsic_reward(s, {3.0, 5.5000001}) == 0.0;

  // Windows driven by a freshly initialised two-level agent on noisy Key-Chest.
  const auto env = make_keychest_config(0.25);
  const agent::GridGeometry geom{env.layout.width(), env.layout.height()};
  Rng rng(5);
  agent::HighLevelPolicy hl({}, geom, rng);
  agent::LowLevelPolicy ll({}, geom, rng);
  long windows = 0, checks = 0, broken = 0;
  for (int e = 0; e < 20; ++e) {
    GridState st = reset(env, rng);
    Subgoal abs{}, rel{};
    for (int t = 0;; ++t) {
      if (t % 10 == 0) {
        abs = agent::emit_subgoal(hl, st, true, rng);
        rel = agent::to_relative(abs, st);
        ++windows;
      }
      const auto r = step(env, st, ll.act(st, rel, false, rng), t, rng);
      rel = agent::goal_transition(rel, st, r.next_state);
      st = r.next_state;
      ++checks;
      broken += !(agent::to_absolute(rel, st) == abs);
      if (r.done) break;
    }
  }
  std::ostringstream o;
  o << "hinge and intrinsic-reward boundaries " << (ok ? "exact" : "WRONG") << "; absolute goal unchanged on "
    << checks - broken << "/" << checks << " steps over " << windows << " windows";
  verdict(5, ok && broken == 0, o.str());
}

// Reuses a finished run whose saved config equals cfg.
harness::RunSummary run_or_reuse(harness::RunConfig cfg, const fs::path& dir) {
  cfg.resolve();
  std::ifstream saved(dir / "checkpoint" / "config.txt");
  if (saved && fs::exists(dir / "summary.json")) {
    std::stringstream ss;
    ss << saved.rdbuf();
    if (ss.str() == harness::to_text(cfg)) {
      std::ifstream sj(dir / "summary.json");
      const auto j = nlohmann::json::parse(sj);
      harness::RunSummary s;
      s.dir = dir;
      s.env_steps = j.at("env_steps");
      s.episodes = j.at("episodes");
      s.final_eval_reward = j.at("final_eval_reward");
      s.final_eval_success = j.at("final_eval_success");
      s.eval_adjacent_fraction = j.at("eval_adjacent_fraction");
      s.train_adjacent_fraction = j.at("train_adjacent_fraction");
      s.policy_forwards_before_pretrain = j.at("policy_forwards_before_pretrain");
      std::printf("  reusing %s\n", dir.string().c_str());
      return s;
    }
  }
  fs::remove_all(dir);
  const auto t0 = Clock::now();
  auto s = harness::run(cfg, dir).front();
  std::printf("  %s: %.0f s, final greedy reward %s\n", dir.string().c_str(), seconds_since(t0),
              f3(s.final_eval_reward).c_str());
  std::fflush(stdout);
  return s;
}

struct Arm {
  std::string name;
  harness::RunConfig cfg;
  std::vector<harness::RunSummary> runs;
  harness::Curve curve;
};

void comparative(const fs::path& work, int seeds, std::int64_t steps, bool with7) {
  std::vector<Arm> arms(3);
  arms[0].name = "hrac_eta20";
  arms[1].name = "hrac_eta0";
  arms[1].cfg.eta = 0.0;
  arms[2].name = "noadj";
  arms[2].cfg.variant = harness::Variant::NoAdj;
  for (auto& a : arms) {
    a.cfg.env = "keychest";
    a.cfg.noise = 0.25;
    a.cfg.total_steps = steps;
  }
  for (int seed = 0; seed < seeds; ++seed) {
    for (auto& a : arms) {
      auto c = a.cfg;
      c.seed = static_cast<std::uint64_t>(seed);
      a.runs.push_back(run_or_reuse(c, work / "keychest" / (a.name + "_s" + std::to_string(seed))));
    }
  }
  // Greedy evaluation reward, 25k-step bins, trailing 100k-step average.
  harness::AggregateOptions ao;
  ao.y = "mean_reward";
  ao.bin_width = 25000;
  ao.smoothing = 4;
  for (auto& a : arms) {
    std::vector<fs::path> files;
    for (const auto& r : a.runs) files.push_back(r.dir / "eval.csv");
    ao.label = a.name;
    a.curve = harness::aggregate(files, ao);
    harness::write_curve(a.curve, work / "keychest" / (a.name + "_curve.csv"));
  }
  // Final point every run reaches.
  auto final_point = [&](const harness::Curve& c) {
    for (std::size_t i = c.x.size(); i-- > 0;) {
      if (c.n[i] == seeds) return i;
    }
    return std::size_t(0);
  };
  std::ostringstream o;
  std::vector<double> mean, sem;
  for (const auto& a : arms) {
    const auto i = final_point(a.curve);
    mean.push_back(a.curve.mean[i]);
    sem.push_back(a.curve.sem[i]);
    o << a.name << " " << f3(a.curve.mean[i]) << " +- " << f3(a.curve.sem[i]) << " @" << a.curve.x[i] << "; ";
  }
  const bool beats_eta0 = mean[0] >= mean[1] && mean[0] - sem[0] > mean[1] + sem[1];
  const bool beats_noadj = mean[0] >= mean[2] && mean[0] - sem[0] > mean[2] + sem[2];
  o << seeds << " seeds, " << steps << " steps";
  verdict(6, beats_eta0 && beats_noadj, o.str());

  if (with7) {
    double adjacent = 0, total = 0, train_frac = 0;
    for (const auto& r : arms[0].runs) {
      // Greedy emissions of the final policy, judged by the final psi, pooled over seeds.
      const auto ev = harness::evaluate_checkpoint(r.dir / "checkpoint", 10, 0xF1A1);
      adjacent += ev.adjacent_subgoals;
      total += ev.subgoals;
      train_frac += r.train_adjacent_fraction;
    }
    const double frac = total > 0 ? adjacent / total : 0.0;
    std::ostringstream p;
    p << "final-policy subgoals with zero adjacency loss " << f3(frac) << " (" << adjacent << "/" << total
      << "); last 5000 exploratory training emissions " << f3(train_frac / double(arms[0].runs.size()));
    verdict(7, frac >= 0.9, p.str());
  }
}

void determinism(const fs::path& work) {
  harness::RunConfig c;
  c.env = "keychest";
  c.seed = 7;
  c.total_steps = 40000;
  c.warmup_steps = 10000;
  c.finetune_every_steps = 10000;
  c.pretrain_epochs = 10;
  c.finetune_epochs = 5;
  const auto a = work / "determinism" / "a", b = work / "determinism" / "b";
  fs::remove_all(a);
  fs::remove_all(b);
  harness::run(c, a);
  harness::run(c, b);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  bool same = true;
  std::ostringstream o;
  for (const char* f : {"metrics.csv", "eval.csv", "events.csv", "summary.json"}) {
    const bool eq = slurp(a / f) == slurp(b / f) && !slurp(a / f).empty();
    same = same && eq;
    o << f << (eq ? " identical" : " DIFFERS") << "; ";
  }
  o << "config seed 7, " << c.total_steps << " steps";
  verdict(8, same, o.str());
}

}  // namespace

int main(int argc, char** argv) {
  harness::tune_allocator();
  CLI::App app{"acceptance criteria"};
  std::string work = "acceptance_runs";
  std::vector<int> only;
  int seeds = 5;
  std::int64_t steps = 500000;
  app.add_option("--work", work, "directory for training runs");
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--seeds", seeds, "seeds per arm for the comparative run");
  app.add_option("--steps", steps, "environment steps per comparative run");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> sel(only.begin(), only.end());
  auto want = [&](int id) { return sel.empty() || sel.count(id) != 0; };
  fs::create_directories(work);

  if (want(1)) oracle_suite();
  if (want(2)) gradients();
  if (want(3)) matrix_convergence();
  if (want(4)) distillation();
  if (want(5)) identities();
  if (want(8)) determinism(work);
  if (want(6) || want(7)) comparative(work, seeds, steps, want(7));
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
