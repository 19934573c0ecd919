#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace hrac {

using Rng = std::mt19937_64;

/// Integer grid position. Also the goal-space cell used to index adjacency.
struct Cell {
  int x = 0;
  int y = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct GridState {
  int x = 0;
  int y = 0;
  bool has_key = false;

  Cell cell() const { return {x, y}; }
  friend bool operator==(const GridState&, const GridState&) = default;
};

/// A point in the two-dimensional goal space (absolute desired position).
struct Subgoal {
  double gx = 0.0;
  double gy = 0.0;

  friend bool operator==(const Subgoal&, const Subgoal&) = default;
};

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3 };
inline constexpr int kNumActions = 4;

/// Throws std::invalid_argument for indices outside [0, 4).
Action action_from_index(int index);

enum class RewardScheme { MazeDense, KeyChestSparse };

/// Wall bitmap plus the special cells. Row 0 is the top line of the file.
class Layout {
 public:
  /// Characters: '#' wall, '.' free, 'A' start, 'G' goal, 'K' key, 'C' chest.
  static Layout parse(std::string_view text);
  static Layout load(const std::filesystem::path& path);

  int width() const { return width_; }
  int height() const { return height_; }
  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  bool is_wall(Cell c) const { return !in_bounds(c) || walls_[index(c)] != 0; }
  bool is_free(Cell c) const { return !is_wall(c); }

  /// Free cells in row-major order (y, then x).
  const std::vector<Cell>& free_cells() const { return free_cells_; }

  std::optional<Cell> start() const { return start_; }
  std::optional<Cell> goal() const { return goal_; }
  std::optional<Cell> key() const { return key_; }
  std::optional<Cell> chest() const { return chest_; }

  std::string to_string() const;

 private:
  int index(Cell c) const { return c.y * width_ + c.x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> walls_;
  std::vector<Cell> free_cells_;
  std::optional<Cell> start_, goal_, key_, chest_;
};

struct EnvConfig {
  Layout layout;
  double random_action_prob = 0.25;
  int max_steps = 200;
  RewardScheme reward_scheme = RewardScheme::MazeDense;

  void validate() const;
};

/// Bundled layouts under data/layouts, with the published step limits and noise.
EnvConfig make_maze_config(double noise = 0.25);
EnvConfig make_keychest_config(double noise = 0.25);
/// name is "maze" or "keychest".
EnvConfig make_env_config(std::string_view name, double noise = 0.25);
std::filesystem::path data_dir();

struct StepResult {
  GridState next_state;
  double reward = 0.0;
  bool done = false;
  /// Goal reached or chest opened, as opposed to running out of steps.
  bool terminal = false;
  Action executed{};
};

GridState reset(const EnvConfig& env, Rng& rng);

/// steps_taken is the number of steps already taken in the episode; the episode
/// is done when this step reaches env.max_steps.
StepResult step(const EnvConfig& env, const GridState& s, int action, int steps_taken, Rng& rng);

/// Deterministic move: position after attempting `a` (walls block).
Cell move(const Layout& layout, Cell from, Action a);

/// Draws the executed action given the commanded one.
Action perturb_action(Action commanded, double random_action_prob, Rng& rng);

Subgoal goal_map(const GridState& s);
/// Nearest free cell to g by Euclidean distance; ties go to lowest y, then lowest x.
GridState goal_unmap(const Layout& layout, const Subgoal& g);

/// Deterministic tabular MDP: next[s * n_actions + a].
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<int> next;

  int successor(int s, int a) const { return next[static_cast<std::size_t>(s) * n_actions + a]; }
};

/// Random deterministic MDP made strongly connected by threading a random
/// Hamiltonian cycle through the table before filling the remaining entries.
TabularMdp gen_random_mdp(int n_states, int n_actions, Rng& rng);

/// Position-only transition graph of a layout; state ids follow free_cells().
struct GridGraph {
  TabularMdp mdp;
  std::vector<Cell> cells;
  std::vector<int> cell_to_state;  // width*height, -1 on walls
  int width = 0;
  int height = 0;

  int state_of(Cell c) const;
};

GridGraph grid_graph(const Layout& layout);

}  // namespace hrac
