#include "hrac/oracle.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hrac::oracle {

std::vector<int> bfs_from(const TabularMdp& mdp, int source) {
  const int n = mdp.n_states;
  std::vector<int> dist(static_cast<std::size_t>(n), n);
  std::vector<int> queue;
  queue.reserve(static_cast<std::size_t>(n));
  dist[source] = 0;
  queue.push_back(source);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int s = queue[head];
    for (int a = 0; a < mdp.n_actions; ++a) {
      const int t = mdp.successor(s, a);
      if (dist[t] == n) {
        dist[t] = dist[s] + 1;
        queue.push_back(t);
      }
    }
  }
  return dist;
}

DistanceTable shortest_transition_distance(const TabularMdp& mdp) {
  const int n = mdp.n_states;
  DistanceTable d(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (int s = 0; s < n; ++s) {
    const auto row = bfs_from(mdp, s);
    for (int t = 0; t < n; ++t) d.at(s, t) = row[t];
  }
  return d;
}

DistanceTable floyd_warshall_reference(const TabularMdp& mdp) {
  const int n = mdp.n_states;
  DistanceTable d(n);
  for (int s = 0; s < n; ++s) {
    d.at(s, s) = 0;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const int t = mdp.successor(s, a);
      if (t != s) d.at(s, t) = std::min(d(s, t), 1);
    }
  }
  for (int m = 0; m < n; ++m) {
    for (int i = 0; i < n; ++i) {
      if (d(i, m) >= n) continue;
      for (int j = 0; j < n; ++j) {
        if (d(m, j) >= n) continue;
        d.at(i, j) = std::min(d(i, j), d(i, m) + d(m, j));
      }
    }
  }
  return d;
}

GoalPolicy optimal_goal_policy(const TabularMdp& mdp, const DistanceTable& d) {
  const int n = mdp.n_states;
  std::vector<int> table(static_cast<std::size_t>(n) * n, 0);
  for (int s = 0; s < n; ++s) {
    for (int g = 0; g < n; ++g) {
      if (g == s) continue;  // already at the goal: action 0
      int best_a = 0;
      int best_d = std::numeric_limits<int>::max();
      for (int a = 0; a < mdp.n_actions; ++a) {
        const int dd = d(mdp.successor(s, a), g);
        if (dd < best_d) {
          best_d = dd;
          best_a = a;
        }
      }
      table[static_cast<std::size_t>(s) * n + g] = best_a;
    }
  }
  return GoalPolicy(n, std::move(table));
}

std::vector<int> rollout(const TabularMdp& mdp, const GoalPolicy& pi, int start, int goal, int steps) {
  std::vector<int> states{start};
  states.reserve(static_cast<std::size_t>(steps) + 1);
  int s = start;
  for (int i = 0; i < steps; ++i) {
    s = mdp.successor(s, pi(s, goal));
    states.push_back(s);
  }
  return states;
}

AdjacentRegion adjacent_region(const DistanceTable& d, int center, int k) {
  if (k < 1) throw std::invalid_argument("adjacent_region requires k >= 1");
  AdjacentRegion region{center, k, {}};
  for (int s = 0; s < d.size(); ++s) {
    if (d(center, s) <= k) region.members.push_back(s);
  }
  return region;
}

TriangleCheck check_triangle_inequality(const DistanceTable& d) {
  const int n = d.size();
  const int inf = d.unreachable();
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (d(a, b) >= inf) continue;
      for (int c = 0; c < n; ++c) {
        if (d(b, c) >= inf) continue;
        if (d(a, c) > d(a, b) + d(b, c)) return {false, std::array<int, 3>{a, b, c}};
      }
    }
  }
  return {};
}

Theorem1Report check_theorem1(const TabularMdp& mdp, const DistanceTable& d, const GoalPolicy& pi,
                              int start, int goal, int k) {
  Theorem1Report rep;
  const int n_to_goal = d(start, goal);
  if (k < 1 || !d.reachable(start, goal) || k > n_to_goal) {
    rep.reason = "precondition violated: need 1 <= k <= d(start, goal)";
    return rep;
  }
  const auto path = rollout(mdp, pi, start, goal, n_to_goal);
  for (int i = 0; i < n_to_goal; ++i) {
    if (d(path[i + 1], goal) != d(path[i], goal) - 1) {
      rep.failing_index = i;
      rep.reason = "optimal policy did not decrease the distance by one";
      return rep;
    }
  }
  if (path.back() != goal) {
    rep.failing_index = n_to_goal;
    rep.reason = "rollout did not reach the goal";
    return rep;
  }

  const int surrogate = path[k];
  rep.surrogate = surrogate;
  if (d(start, surrogate) > k) {
    rep.failing_index = k;
    rep.reason = "surrogate outside the k-step adjacent region";
    return rep;
  }
  if (d(start, surrogate) != k) {
    rep.failing_index = k;
    rep.reason = "k-prefix of a shortest path is not shortest";
    return rep;
  }
  for (int i = 0; i < k; ++i) {
    if (pi(path[i], surrogate) != pi(path[i], goal)) {
      rep.failing_index = i;
      rep.reason = "policy action differs between surrogate and goal";
      return rep;
    }
  }
  rep.ok = true;
  return rep;
}

Theorem1Report check_theorem1(const TabularMdp& mdp, int start, int goal, int k) {
  const auto d = shortest_transition_distance(mdp);
  const auto pi = optimal_goal_policy(mdp, d);
  return check_theorem1(mdp, d, pi, start, goal, k);
}

int surrogate_goal(const TabularMdp& mdp, const DistanceTable& d, const GoalPolicy& pi, int start,
                   int goal, int k) {
  if (!d.reachable(start, goal) || d(start, goal) <= k) return goal;
  return rollout(mdp, pi, start, goal, k).back();
}

RewardTable random_reward_table(const TabularMdp& mdp, Rng& rng) {
  std::uniform_int_distribution<int> pick(-2, 4);
  RewardTable rt;
  rt.r.resize(mdp.next.size());
  for (auto& v : rt.r) v = pick(rng) * 0.25;
  return rt;
}

KStepOutcome run_k_steps(const TabularMdp& mdp, const RewardTable& reward, const GoalPolicy& pi,
                         int start, int goal, int k) {
  KStepOutcome out{start, 0.0};
  for (int i = 0; i < k; ++i) {
    const int a = pi(out.end_state, goal);
    out.reward += reward(mdp, out.end_state, a);
    out.end_state = mdp.successor(out.end_state, a);
  }
  return out;
}

HighLevelQ high_level_value_iteration(const TabularMdp& mdp, const RewardTable& reward,
                                      const GoalPolicy& pi, int k, int horizon, double gamma) {
  const int n = mdp.n_states;
  HighLevelQ hq;
  hq.n_states = n;
  hq.horizon = horizon;
  hq.q.assign(static_cast<std::size_t>(horizon) + 1,
              std::vector<double>(static_cast<std::size_t>(n) * n, 0.0));
  std::vector<KStepOutcome> outcome(static_cast<std::size_t>(n) * n);
  for (int s = 0; s < n; ++s) {
    for (int g = 0; g < n; ++g) outcome[static_cast<std::size_t>(s) * n + g] = run_k_steps(mdp, reward, pi, s, g, k);
  }
  for (int t = horizon - 1; t >= 0; --t) {
    std::vector<double> v_next(static_cast<std::size_t>(n), 0.0);
    for (int s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int g = 0; g < n; ++g) best = std::max(best, hq(t + 1, s, g));
      v_next[s] = best;
    }
    for (int s = 0; s < n; ++s) {
      for (int g = 0; g < n; ++g) {
        const auto& o = outcome[static_cast<std::size_t>(s) * n + g];
        hq.q[t][static_cast<std::size_t>(s) * n + g] = o.reward + gamma * v_next[o.end_state];
      }
    }
  }
  return hq;
}

Theorem2Report check_theorem2(const TabularMdp& mdp, const RewardTable& reward, int k, int horizon,
                              double gamma) {
  Theorem2Report rep;
  std::ostringstream diag;
  const int n = mdp.n_states;
  const auto d = shortest_transition_distance(mdp);
  const auto pi = optimal_goal_policy(mdp, d);
  const auto hq = high_level_value_iteration(mdp, reward, pi, k, horizon, gamma);

  for (int s = 0; s < n; ++s) {
    for (int g = 0; g < n; ++g) {
      if (hq(horizon, s, g) != 0.0) {
        diag << "terminal Q nonzero at s=" << s << " g=" << g << '\n';
        rep.diagnostics = diag.str();
        return rep;
      }
    }
  }

  for (int s0 = 0; s0 < n; ++s0) {
    int s = s0;
    for (int t = 0; t < horizon; ++t) {
      int g_opt = 0;
      for (int g = 1; g < n; ++g) {
        if (hq(t, s, g) > hq(t, s, g_opt)) g_opt = g;
      }
      const int g_sur = surrogate_goal(mdp, d, pi, s, g_opt, k);
      if (d(s, g_sur) > k) {
        diag << "start " << s0 << " t=" << t << ": surrogate " << g_sur << " not adjacent to " << s << '\n';
        rep.diagnostics = diag.str();
        return rep;
      }
      const auto a = run_k_steps(mdp, reward, pi, s, g_opt, k);
      const auto b = run_k_steps(mdp, reward, pi, s, g_sur, k);
      if (a.end_state != b.end_state || a.reward != b.reward) {
        diag << "start " << s0 << " t=" << t << ": surrogate changes the k-step outcome\n";
        rep.diagnostics = diag.str();
        return rep;
      }
      if (hq(t, s, g_sur) != hq(t, s, g_opt)) {
        diag << "start " << s0 << " t=" << t << ": Q(s, surrogate)=" << hq(t, s, g_sur)
             << " != Q(s, goal)=" << hq(t, s, g_opt) << '\n';
        rep.diagnostics = diag.str();
        return rep;
      }
      s = a.end_state;
    }
  }
  rep.ok = true;
  return rep;
}

std::vector<std::uint8_t> perfect_adjacency_matrix(const DistanceTable& d, int k, bool symmetrize) {
  const int n = d.size();
  std::vector<std::uint8_t> m(static_cast<std::size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const bool adj = d(i, j) <= k || (symmetrize && d(j, i) <= k);
      m[static_cast<std::size_t>(i) * n + j] = adj ? 1 : 0;
    }
  }
  return m;
}

SuiteReport run_suite(const SuiteOptions& opts) {
  SuiteReport rep;
  Rng rng(opts.seed);
  std::uniform_int_distribution<int> states(2, std::max(2, opts.max_states));
  std::uniform_int_distribution<int> actions(2, std::max(2, opts.max_actions));
  auto note = [&](const std::string& msg) {
    if (rep.failures.size() < 20) rep.failures.push_back(msg);
  };
  for (int f = 0; f < opts.fixtures; ++f) {
    const int n = states(rng);
    const TabularMdp mdp = gen_random_mdp(n, actions(rng), rng);
    const DistanceTable d = shortest_transition_distance(mdp);
    const GoalPolicy pi = optimal_goal_policy(mdp, d);
    ++rep.fixtures;

    ++rep.triangle_checks;
    if (!check_triangle_inequality(d).ok) {
      ++rep.triangle_failures;
      note("fixture " + std::to_string(f) + ": triangle inequality");
    }
    for (int k : opts.theorem1_k) {
      for (int s = 0; s < n; ++s) {
        for (int g = 0; g < n; ++g) {
          if (!d.reachable(s, g) || k > d(s, g)) continue;
          ++rep.theorem1_checks;
          const auto r = check_theorem1(mdp, d, pi, s, g, k);
          if (!r.ok) {
            ++rep.theorem1_failures;
            note("fixture " + std::to_string(f) + " theorem1 s=" + std::to_string(s) + " g=" + std::to_string(g) +
                 " k=" + std::to_string(k) + ": " + r.reason);
          }
        }
      }
    }
    const RewardTable reward = random_reward_table(mdp, rng);
    for (int k : opts.theorem2_k) {
      for (int T : opts.horizons) {
        ++rep.theorem2_checks;
        const auto r = check_theorem2(mdp, reward, k, T);
        if (!r.ok) {
          ++rep.theorem2_failures;
          note("fixture " + std::to_string(f) + " theorem2 k=" + std::to_string(k) + " T=" + std::to_string(T) + ": " +
               r.diagnostics);
        }
      }
    }
  }
  return rep;
}

}  // namespace hrac::oracle
