#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <map>

#include "hrac/gridworld.hpp"

using namespace hrac;

namespace {

EnvConfig deterministic(EnvConfig env) {
  env.random_action_prob = 0.0;
  return env;
}

int index_of(Action a) { return static_cast<int>(a); }

// Plain BFS reachability over the transition table.
bool all_reachable_from(const TabularMdp& mdp, int source) {
  std::vector<bool> seen(mdp.n_states, false);
  std::deque<int> q{source};
  seen[source] = true;
  while (!q.empty()) {
    const int s = q.front();
    q.pop_front();
    for (int a = 0; a < mdp.n_actions; ++a) {
      const int t = mdp.successor(s, a);
      if (!seen[t]) {
        seen[t] = true;
        q.push_back(t);
      }
    }
  }
  for (bool b : seen) {
    if (!b) return false;
  }
  return true;
}

}  // namespace

TEST(Layout, BundledMazeShape) {
  const auto env = make_maze_config();
  EXPECT_EQ(env.layout.width(), 17);
  EXPECT_EQ(env.layout.height(), 13);
  EXPECT_EQ(env.max_steps, 200);
  EXPECT_DOUBLE_EQ(env.random_action_prob, 0.25);
  ASSERT_TRUE(env.layout.start());
  ASSERT_TRUE(env.layout.goal());
}

TEST(Layout, BundledKeyChestShape) {
  const auto env = make_keychest_config();
  EXPECT_EQ(env.layout.width(), 17);
  EXPECT_EQ(env.layout.height(), 13);
  EXPECT_EQ(env.max_steps, 500);
  ASSERT_TRUE(env.layout.key());
  ASSERT_TRUE(env.layout.chest());
}

TEST(Layout, ParseErrors) {
  EXPECT_THROW(Layout::parse(""), std::invalid_argument);
  EXPECT_THROW(Layout::parse("###\n##\n"), std::invalid_argument);
  EXPECT_THROW(Layout::parse("#x#\n"), std::invalid_argument);
  EXPECT_THROW(Layout::parse("###\n###\n"), std::invalid_argument);
}

TEST(Layout, FreeCellsRowMajor) {
  const auto l = Layout::parse("####\n#..#\n#.A#\n####\n");
  const std::vector<Cell> expect{{1, 1}, {2, 1}, {1, 2}, {2, 2}};
  EXPECT_EQ(l.free_cells(), expect);
  EXPECT_EQ(*l.start(), (Cell{2, 2}));
  EXPECT_TRUE(l.is_wall({-1, 0}));
  EXPECT_TRUE(l.is_wall({0, 0}));
}

TEST(EnvConfig, Validate) {
  auto env = make_maze_config();
  env.max_steps = 0;
  EXPECT_THROW(env.validate(), std::invalid_argument);
  env = make_maze_config();
  env.random_action_prob = 1.5;
  EXPECT_THROW(env.validate(), std::invalid_argument);
  EXPECT_THROW(make_env_config("ant"), std::invalid_argument);
}

TEST(Reset, MazeFixedStart) {
  const auto env = make_maze_config();
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto s = reset(env, rng);
    EXPECT_EQ(s.cell(), *env.layout.start());
    EXPECT_FALSE(s.has_key);
  }
}

TEST(Reset, KeyChestSeeded) {
  const auto env = make_keychest_config();
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(reset(env, a), reset(env, b));
}

TEST(Reset, KeyChestUniformChiSquared) {
  const auto env = make_keychest_config();
  const auto& cells = env.layout.free_cells();
  std::map<Cell, int> counts;
  Rng rng(2024);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto s = reset(env, rng);
    ASSERT_FALSE(s.has_key);
    ASSERT_TRUE(env.layout.is_free(s.cell()));
    ++counts[s.cell()];
  }
  const double expected = double(n) / double(cells.size());
  double chi2 = 0.0;
  for (const auto& c : cells) {
    const double o = counts.count(c) ? counts[c] : 0;
    chi2 += (o - expected) * (o - expected) / expected;
  }
  // Wilson-Hilferty critical value at p = 0.001.
  const double df = double(cells.size() - 1);
  const double z = 3.090;
  const double crit = df * std::pow(1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df)), 3.0);
  EXPECT_LT(chi2, crit) << "df=" << df;
}

TEST(Step, DeterministicMoveRight) {
  const auto env = deterministic(make_maze_config());
  Rng rng(0);
  const auto r = step(env, {1, 1, false}, index_of(Action::Right), 0, rng);
  EXPECT_EQ(r.next_state, (GridState{2, 1, false}));
  EXPECT_FALSE(r.done);
}

TEST(Step, WallsBlock) {
  const auto env = deterministic(make_maze_config());
  Rng rng(0);
  const auto r = step(env, {1, 1, false}, index_of(Action::Up), 0, rng);
  EXPECT_EQ(r.next_state, (GridState{1, 1, false}));
  EXPECT_DOUBLE_EQ(r.reward, 0.0);
}

TEST(Step, MazeRewardSigns) {
  const auto env = deterministic(make_maze_config());
  Rng rng(0);
  EXPECT_DOUBLE_EQ(step(env, {1, 1, false}, index_of(Action::Right), 0, rng).reward, 0.1);
  EXPECT_DOUBLE_EQ(step(env, {2, 1, false}, index_of(Action::Left), 0, rng).reward, -0.1);
  EXPECT_DOUBLE_EQ(step(env, {1, 1, false}, index_of(Action::Left), 0, rng).reward, 0.0);
}

TEST(Step, MazeGoalTerminates) {
  const auto env = deterministic(make_maze_config());
  const Cell g = *env.layout.goal();
  Rng rng(0);
  const auto r = step(env, {g.x, g.y + 1, false}, index_of(Action::Up), 3, rng);
  EXPECT_EQ(r.next_state.cell(), g);
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(r.terminal);
}

TEST(Step, MazeStepLimit) {
  const auto env = deterministic(make_maze_config());
  Rng rng(0);
  EXPECT_FALSE(step(env, {1, 1, false}, 0, 198, rng).done);
  const auto r = step(env, {1, 1, false}, 0, 199, rng);
  EXPECT_TRUE(r.done);
  EXPECT_FALSE(r.terminal);
}

TEST(Step, KeyPickupOnce) {
  const auto env = deterministic(make_keychest_config());
  const Cell k = *env.layout.key();
  Rng rng(0);
  const auto r = step(env, {k.x, k.y + 1, false}, index_of(Action::Up), 0, rng);
  EXPECT_DOUBLE_EQ(r.reward, 1.0);
  EXPECT_TRUE(r.next_state.has_key);
  EXPECT_FALSE(r.done);
  // Leaving and re-entering the key cell pays nothing.
  const auto away = step(env, r.next_state, index_of(Action::Down), 1, rng);
  const auto back = step(env, away.next_state, index_of(Action::Up), 2, rng);
  EXPECT_DOUBLE_EQ(back.reward, 0.0);
  EXPECT_TRUE(back.next_state.has_key);
}

TEST(Step, ChestNeedsKey) {
  const auto env = deterministic(make_keychest_config());
  const Cell c = *env.layout.chest();
  Rng rng(0);
  const auto without = step(env, {c.x - 1, c.y, false}, index_of(Action::Right), 0, rng);
  EXPECT_DOUBLE_EQ(without.reward, 0.0);
  EXPECT_FALSE(without.done);
  const auto with = step(env, {c.x - 1, c.y, true}, index_of(Action::Right), 0, rng);
  EXPECT_DOUBLE_EQ(with.reward, 5.0);
  EXPECT_TRUE(with.done);
  EXPECT_TRUE(with.terminal);
}

TEST(Step, KeyChestStepLimit) {
  const auto env = deterministic(make_keychest_config());
  Rng rng(0);
  EXPECT_FALSE(step(env, {4, 4, false}, 0, 498, rng).done);
  EXPECT_TRUE(step(env, {4, 4, false}, 0, 499, rng).done);
}

TEST(Step, InvalidActionRejected) {
  const auto env = make_maze_config();
  Rng rng(0);
  EXPECT_THROW(step(env, {1, 1, false}, 4, 0, rng), std::invalid_argument);
  EXPECT_THROW(step(env, {1, 1, false}, -1, 0, rng), std::invalid_argument);
  EXPECT_THROW(action_from_index(7), std::invalid_argument);
}

TEST(Step, ZeroNoiseIsPure) {
  const auto env = deterministic(make_keychest_config());
  Rng a(1), b(999);
  for (const auto& c : env.layout.free_cells()) {
    for (int act = 0; act < kNumActions; ++act) {
      const auto ra = step(env, {c.x, c.y, false}, act, 0, a);
      const auto rb = step(env, {c.x, c.y, false}, act, 0, b);
      ASSERT_EQ(ra.next_state, rb.next_state);
      ASSERT_EQ(ra.reward, rb.reward);
    }
  }
}

TEST(Step, NoiseDistributionWithinThreeSigma) {
  Rng rng(77);
  const int n = 100000;
  for (int commanded = 0; commanded < kNumActions; ++commanded) {
    std::array<int, kNumActions> hist{};
    for (int i = 0; i < n; ++i) ++hist[index_of(perturb_action(action_from_index(commanded), 0.25, rng))];
    for (int a = 0; a < kNumActions; ++a) {
      const double p = a == commanded ? 0.75 + 0.25 / 4 : 0.25 / 4;
      const double sigma = std::sqrt(n * p * (1 - p));
      EXPECT_NEAR(hist[a], n * p, 3 * sigma) << "commanded " << commanded << " executed " << a;
    }
  }
}

TEST(Step, ExecutedActionReported) {
  const auto env = make_maze_config();
  Rng rng(5);
  int differs = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto r = step(env, {3, 3, false}, index_of(Action::Right), 0, rng);
    const Cell expect = move(env.layout, {3, 3}, r.executed);
    ASSERT_EQ(r.next_state.cell(), expect);
    differs += r.executed != Action::Right;
  }
  EXPECT_GT(differs, 0);
}

TEST(Properties, RandomWalkStaysOffWalls) {
  for (const char* name : {"maze", "keychest"}) {
    const auto env = make_env_config(name);
    Rng rng(11);
    std::uniform_int_distribution<int> any(0, 3);
    auto s = reset(env, rng);
    int t = 0;
    int key_rewards = 0;
    double maze_total = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const bool had_key = s.has_key;
      const auto r = step(env, s, any(rng), t, rng);
      ASSERT_TRUE(env.layout.is_free(r.next_state.cell()));
      if (env.reward_scheme == RewardScheme::MazeDense) {
        ASSERT_TRUE(r.reward == 0.0 || r.reward == 0.1 || r.reward == -0.1);
        maze_total += r.reward;
      } else {
        if (r.reward == 1.0) ++key_rewards;
        if (r.reward == 5.0) ASSERT_TRUE(had_key);
        ASSERT_LE(key_rewards, 1);
      }
      s = r.next_state;
      ++t;
      if (r.done) {
        if (env.reward_scheme == RewardScheme::MazeDense) ASSERT_LE(std::abs(maze_total), 0.1 * env.max_steps + 1e-9);
        s = reset(env, rng);
        t = 0;
        key_rewards = 0;
        maze_total = 0.0;
      }
    }
  }
}

TEST(GoalMap, Projection) {
  EXPECT_EQ(goal_map({3, 5, true}), (Subgoal{3.0, 5.0}));
  EXPECT_EQ(goal_map({0, 0, false}), (Subgoal{0.0, 0.0}));
}

TEST(GoalUnmap, RoundingAndTieBreak) {
  const auto layout = make_maze_config().layout;
  EXPECT_EQ(goal_unmap(layout, {3.4, 5.0}).cell(), (Cell{3, 5}));
  EXPECT_EQ(goal_unmap(layout, {3.5, 5.0}).cell(), (Cell{3, 5}));
  EXPECT_EQ(goal_unmap(layout, {3.0, 4.5}).cell(), (Cell{3, 4}));
}

TEST(GoalUnmap, InverseOnFreeCells) {
  const auto layout = make_keychest_config().layout;
  for (const auto& c : layout.free_cells()) {
    const Subgoal g{double(c.x), double(c.y)};
    EXPECT_EQ(goal_map(goal_unmap(layout, g)), g);
  }
}

TEST(GoalUnmap, MatchesExhaustiveNearestFreeCell) {
  const auto layout = make_maze_config().layout;
  Rng rng(8);
  std::uniform_real_distribution<double> ux(-2.0, 18.0), uy(-2.0, 14.0);
  auto brute = [&](const Subgoal& g) {
    Cell best{};
    double bd = 1e300;
    for (int y = 0; y < layout.height(); ++y) {
      for (int x = 0; x < layout.width(); ++x) {
        if (layout.is_wall({x, y})) continue;
        const double d = (x - g.gx) * (x - g.gx) + (y - g.gy) * (y - g.gy);
        if (d < bd) {
          bd = d;
          best = {x, y};
        }
      }
    }
    return best;
  };
  for (int i = 0; i < 3000; ++i) {
    const Subgoal g{ux(rng), uy(rng)};
    ASSERT_EQ(goal_unmap(layout, g).cell(), brute(g)) << g.gx << "," << g.gy;
  }
  // Inside the wall column at x = 6: (5, 2) and (7, 2) tie, lowest x wins.
  EXPECT_EQ(goal_unmap(layout, {6.0, 2.0}).cell(), (Cell{5, 2}));
}

TEST(RandomMdp, TwoStates) {
  Rng rng(3);
  const auto mdp = gen_random_mdp(2, 2, rng);
  EXPECT_TRUE(all_reachable_from(mdp, 0));
  EXPECT_TRUE(all_reachable_from(mdp, 1));
}

TEST(RandomMdp, StronglyConnected) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 40, a = 2 + trial % 3;
    const auto mdp = gen_random_mdp(n, a, rng);
    ASSERT_EQ(mdp.next.size(), static_cast<std::size_t>(n * a));
    for (int s = 0; s < n; ++s) ASSERT_TRUE(all_reachable_from(mdp, s)) << "trial " << trial;
  }
}

TEST(RandomMdp, Seeded) {
  Rng a(9), b(9);
  EXPECT_EQ(gen_random_mdp(25, 4, a).next, gen_random_mdp(25, 4, b).next);
  EXPECT_THROW(gen_random_mdp(1, 2, a), std::invalid_argument);
  EXPECT_THROW(gen_random_mdp(5, 1, a), std::invalid_argument);
}

TEST(GridGraph, MatchesMove) {
  const auto layout = make_maze_config().layout;
  const auto g = grid_graph(layout);
  ASSERT_EQ(g.cells, layout.free_cells());
  for (int s = 0; s < g.mdp.n_states; ++s) {
    EXPECT_EQ(g.state_of(g.cells[s]), s);
    for (int a = 0; a < kNumActions; ++a) {
      EXPECT_EQ(g.cells[g.mdp.successor(s, a)], move(layout, g.cells[s], action_from_index(a)));
    }
  }
  EXPECT_EQ(g.state_of({0, 0}), -1);
}
