#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "hrac/gridworld.hpp"

namespace hrac::oracle {

/// All-pairs shortest transition distances of a deterministic MDP. Unreachable
/// pairs hold `unreachable()`, which is n_states (longer than any simple path).
class DistanceTable {
 public:
  DistanceTable() = default;
  explicit DistanceTable(int n) : n_(n), d_(static_cast<std::size_t>(n) * n, n) {}

  int size() const { return n_; }
  int unreachable() const { return n_; }
  int operator()(int from, int to) const { return d_[idx(from, to)]; }
  int& at(int from, int to) { return d_[idx(from, to)]; }
  bool reachable(int from, int to) const { return (*this)(from, to) < n_; }
  const std::vector<int>& raw() const { return d_; }

  friend bool operator==(const DistanceTable&, const DistanceTable&) = default;

 private:
  std::size_t idx(int from, int to) const { return static_cast<std::size_t>(from) * n_ + to; }

  int n_ = 0;
  std::vector<int> d_;
};

/// BFS from every source; sources are distributed over OpenMP threads.
DistanceTable shortest_transition_distance(const TabularMdp& mdp);
/// Single-source BFS distances (row of the table).
std::vector<int> bfs_from(const TabularMdp& mdp, int source);
/// Serial Floyd-Warshall reference used to cross-check the BFS kernel.
DistanceTable floyd_warshall_reference(const TabularMdp& mdp);

/// Deterministic optimal goal-conditioned policy with lowest-index tie-break.
/// When the goal is the current state the policy returns action 0.
class GoalPolicy {
 public:
  GoalPolicy() = default;
  GoalPolicy(int n_states, std::vector<int> table) : n_(n_states), table_(std::move(table)) {}

  int operator()(int state, int goal) const {
    return table_[static_cast<std::size_t>(state) * n_ + goal];
  }
  int size() const { return n_; }

 private:
  int n_ = 0;
  std::vector<int> table_;
};

GoalPolicy optimal_goal_policy(const TabularMdp& mdp, const DistanceTable& d);

/// States visited when following the policy from `start` toward `goal` for `steps` steps,
/// including `start` (length steps + 1).
std::vector<int> rollout(const TabularMdp& mdp, const GoalPolicy& pi, int start, int goal, int steps);

struct AdjacentRegion {
  int center = 0;
  int k = 1;
  std::vector<int> members;  // sorted state ids
};

/// Members are states within k steps of `center`. Throws for k < 1.
AdjacentRegion adjacent_region(const DistanceTable& d, int center, int k);

struct TriangleCheck {
  bool ok = true;
  /// First (a, b, c) in lexicographic order with d(a,c) > d(a,b) + d(b,c).
  std::optional<std::array<int, 3>> violation;
};

TriangleCheck check_triangle_inequality(const DistanceTable& d);

struct Theorem1Report {
  bool ok = false;
  int surrogate = -1;
  /// Rollout index at which a check failed, -1 if none.
  int failing_index = -1;
  std::string reason;
};

/// Builds the surrogate goal from the k-th state of the optimal rollout toward
/// `goal` and verifies adjacency, the shortest sub-path property, and that the
/// policy picks the same action for both goals along the first k states.
/// Requires 1 <= k <= d(start, goal).
Theorem1Report check_theorem1(const TabularMdp& mdp, const DistanceTable& d, const GoalPolicy& pi,
                              int start, int goal, int k);
Theorem1Report check_theorem1(const TabularMdp& mdp, int start, int goal, int k);

/// Surrogate for an arbitrary goal: the Theorem-1 construction when the goal is
/// beyond k steps, the goal itself otherwise.
int surrogate_goal(const TabularMdp& mdp, const DistanceTable& d, const GoalPolicy& pi, int start,
                   int goal, int k);

/// Reward table R(s, a), indexed [s * n_actions + a].
struct RewardTable {
  std::vector<double> r;
  double operator()(const TabularMdp& mdp, int s, int a) const {
    return r[static_cast<std::size_t>(s) * mdp.n_actions + a];
  }
};

RewardTable random_reward_table(const TabularMdp& mdp, Rng& rng);

/// Finite-horizon high-level Q-function over goal actions: q[t][s * n + g] where
/// choosing goal g at s runs the optimal policy for k steps.
struct HighLevelQ {
  int n_states = 0;
  int horizon = 0;
  std::vector<std::vector<double>> q;  // horizon + 1 tables; q[horizon] is all zero

  double operator()(int t, int s, int g) const {
    return q[t][static_cast<std::size_t>(s) * n_states + g];
  }
};

struct KStepOutcome {
  int end_state = 0;
  double reward = 0.0;
};

/// Runs the low-level optimal policy toward g for k steps and sums rewards in order.
KStepOutcome run_k_steps(const TabularMdp& mdp, const RewardTable& reward, const GoalPolicy& pi,
                         int start, int goal, int k);

HighLevelQ high_level_value_iteration(const TabularMdp& mdp, const RewardTable& reward,
                                      const GoalPolicy& pi, int k, int horizon, double gamma);

struct Theorem2Report {
  bool ok = false;
  std::string diagnostics;
};

/// For every start state: follows an optimal subgoal trajectory of length T,
/// replaces each subgoal by its surrogate and checks adjacency plus equal Q.
Theorem2Report check_theorem2(const TabularMdp& mdp, const RewardTable& reward, int k, int horizon,
                              double gamma = 0.99);

/// entry(i, j) = 1 iff d(i, j) <= k; with `symmetrize`, iff either direction is.
std::vector<std::uint8_t> perfect_adjacency_matrix(const DistanceTable& d, int k, bool symmetrize);

struct SuiteOptions {
  int fixtures = 100;
  int max_states = 30;
  int max_actions = 4;
  std::vector<int> theorem1_k{2, 3, 5};
  std::vector<int> theorem2_k{2, 3};
  std::vector<int> horizons{2, 3};
  std::uint64_t seed = 0;
};

struct SuiteReport {
  int fixtures = 0;
  long triangle_checks = 0, triangle_failures = 0;
  long theorem1_checks = 0, theorem1_failures = 0;
  long theorem2_checks = 0, theorem2_failures = 0;
  std::vector<std::string> failures;  // first few, human readable

  bool ok() const { return triangle_failures == 0 && theorem1_failures == 0 && theorem2_failures == 0; }
};

/// Random strongly connected MDPs (2..max_states states, 2..max_actions actions);
/// triangle inequality, every (s, g, k) with k <= d(s, g), and theorem 2 per (k, T).
SuiteReport run_suite(const SuiteOptions& opts);

}  // namespace hrac::oracle
