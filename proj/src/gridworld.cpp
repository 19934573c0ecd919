#include "hrac/gridworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hrac {

Action action_from_index(int index) {
  if (index < 0 || index >= kNumActions) {
    throw std::invalid_argument("action index out of range: " + std::to_string(index));
  }
  return static_cast<Action>(index);
}

Layout Layout::parse(std::string_view text) {
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.empty()) throw std::invalid_argument("layout is empty");

  Layout out;
  out.height_ = static_cast<int>(rows.size());
  out.width_ = static_cast<int>(rows.front().size());
  out.walls_.assign(static_cast<std::size_t>(out.width_ * out.height_), 0);
  for (int y = 0; y < out.height_; ++y) {
    if (static_cast<int>(rows[y].size()) != out.width_) {
      throw std::invalid_argument("layout row " + std::to_string(y) + " has ragged width");
    }
    for (int x = 0; x < out.width_; ++x) {
      const Cell c{x, y};
      switch (rows[y][x]) {
        case '#': out.walls_[out.index(c)] = 1; break;
        case '.': break;
        case 'A': out.start_ = c; break;
        case 'G': out.goal_ = c; break;
        case 'K': out.key_ = c; break;
        case 'C': out.chest_ = c; break;
        default:
          throw std::invalid_argument(std::string("unknown layout character '") + rows[y][x] + "'");
      }
      if (out.walls_[out.index(c)] == 0) out.free_cells_.push_back(c);
    }
  }
  if (out.free_cells_.empty()) throw std::invalid_argument("layout has no free cell");
  return out;
}

Layout Layout::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open layout " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Layout::to_string() const {
  std::string s;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      const Cell c{x, y};
      char ch = is_wall(c) ? '#' : '.';
      if (start_ == c) ch = 'A';
      if (goal_ == c) ch = 'G';
      if (key_ == c) ch = 'K';
      if (chest_ == c) ch = 'C';
      s.push_back(ch);
    }
    s.push_back('\n');
  }
  return s;
}

void EnvConfig::validate() const {
  if (layout.free_cells().empty()) throw std::invalid_argument("layout has no free cell");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  if (!(random_action_prob >= 0.0 && random_action_prob <= 1.0)) {
    throw std::invalid_argument("random_action_prob must lie in [0, 1]");
  }
  if (reward_scheme == RewardScheme::MazeDense && (!layout.start() || !layout.goal())) {
    throw std::invalid_argument("maze layout needs 'A' and 'G' cells");
  }
  if (reward_scheme == RewardScheme::KeyChestSparse && (!layout.key() || !layout.chest())) {
    throw std::invalid_argument("key-chest layout needs 'K' and 'C' cells");
  }
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("HRAC_DATA_DIR")) return env;
  return HRAC_DATA_DIR;
}

EnvConfig make_maze_config(double noise) {
  EnvConfig cfg{Layout::load(data_dir() / "layouts" / "maze.txt"), noise, 200, RewardScheme::MazeDense};
  cfg.validate();
  return cfg;
}

EnvConfig make_keychest_config(double noise) {
  EnvConfig cfg{Layout::load(data_dir() / "layouts" / "keychest.txt"), noise, 500,
                RewardScheme::KeyChestSparse};
  cfg.validate();
  return cfg;
}

EnvConfig make_env_config(std::string_view name, double noise) {
  if (name == "maze") return make_maze_config(noise);
  if (name == "keychest") return make_keychest_config(noise);
  throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

GridState reset(const EnvConfig& env, Rng& rng) {
  if (env.reward_scheme == RewardScheme::MazeDense) {
    const Cell c = *env.layout.start();
    return {c.x, c.y, false};
  }
  const auto& cells = env.layout.free_cells();
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  const Cell c = cells[pick(rng)];
  return {c.x, c.y, false};
}

Cell move(const Layout& layout, Cell from, Action a) {
  Cell to = from;
  switch (a) {
    case Action::Up: --to.y; break;
    case Action::Down: ++to.y; break;
    case Action::Left: --to.x; break;
    case Action::Right: ++to.x; break;
  }
  return layout.is_free(to) ? to : from;
}

Action perturb_action(Action commanded, double random_action_prob, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < random_action_prob) {
    std::uniform_int_distribution<int> pick(0, kNumActions - 1);
    return static_cast<Action>(pick(rng));
  }
  return commanded;
}

namespace {

double euclid(Cell a, Cell b) { return std::hypot(double(a.x - b.x), double(a.y - b.y)); }

}  // namespace

StepResult step(const EnvConfig& env, const GridState& s, int action, int steps_taken, Rng& rng) {
  const Action commanded = action_from_index(action);
  const Action executed = perturb_action(commanded, env.random_action_prob, rng);
  const Cell to = move(env.layout, s.cell(), executed);

  StepResult r;
  r.executed = executed;
  r.next_state = {to.x, to.y, s.has_key};

  if (env.reward_scheme == RewardScheme::MazeDense) {
    const Cell goal = *env.layout.goal();
    const double before = euclid(s.cell(), goal);
    const double after = euclid(to, goal);
    if (after < before) r.reward = 0.1;
    else if (after > before) r.reward = -0.1;
    r.terminal = (to == goal);
  } else {
    if (!s.has_key && to == *env.layout.key()) {
      r.next_state.has_key = true;
      r.reward = 1.0;
    } else if (s.has_key && to == *env.layout.chest()) {
      r.reward = 5.0;
      r.terminal = true;
    }
  }
  r.done = r.terminal || steps_taken + 1 >= env.max_steps;
  return r;
}

Subgoal goal_map(const GridState& s) { return {double(s.x), double(s.y)}; }

GridState goal_unmap(const Layout& layout, const Subgoal& g) {
  // Rounding handles the common case; exact halves and walls fall through to the scan.
  const Cell rounded{static_cast<int>(std::lround(g.gx)), static_cast<int>(std::lround(g.gy))};
  if (layout.is_free(rounded) && std::abs(g.gx - rounded.x) < 0.5 && std::abs(g.gy - rounded.y) < 0.5) {
    return {rounded.x, rounded.y, false};
  }
  const Cell* best = nullptr;
  double best_d2 = 0.0;
  for (const Cell& c : layout.free_cells()) {  // row-major order gives the tie-break
    const double dx = c.x - g.gx, dy = c.y - g.gy;
    const double d2 = dx * dx + dy * dy;
    if (best == nullptr || d2 < best_d2) {
      best = &c;
      best_d2 = d2;
    }
  }
  return {best->x, best->y, false};
}

TabularMdp gen_random_mdp(int n_states, int n_actions, Rng& rng) {
  if (n_states < 2 || n_actions < 2) throw std::invalid_argument("need >= 2 states and >= 2 actions");
  TabularMdp mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.next.assign(static_cast<std::size_t>(n_states) * n_actions, -1);

  std::vector<int> order(n_states);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<int> pick_action(0, n_actions - 1);
  for (int i = 0; i < n_states; ++i) {
    const int from = order[i];
    const int to = order[(i + 1) % n_states];
    mdp.next[static_cast<std::size_t>(from) * n_actions + pick_action(rng)] = to;
  }
  std::uniform_int_distribution<int> pick_state(0, n_states - 1);
  for (auto& entry : mdp.next) {
    if (entry < 0) entry = pick_state(rng);
  }
  return mdp;
}

int GridGraph::state_of(Cell c) const {
  if (c.x < 0 || c.y < 0 || c.x >= width || c.y >= height) return -1;
  return cell_to_state[static_cast<std::size_t>(c.y * width + c.x)];
}

GridGraph grid_graph(const Layout& layout) {
  GridGraph g;
  g.width = layout.width();
  g.height = layout.height();
  g.cells = layout.free_cells();
  g.cell_to_state.assign(static_cast<std::size_t>(layout.width() * layout.height()), -1);
  for (int i = 0; i < static_cast<int>(g.cells.size()); ++i) {
    g.cell_to_state[static_cast<std::size_t>(g.cells[i].y * layout.width() + g.cells[i].x)] = i;
  }
  g.mdp.n_states = static_cast<int>(g.cells.size());
  g.mdp.n_actions = kNumActions;
  g.mdp.next.resize(static_cast<std::size_t>(g.mdp.n_states) * kNumActions);
  for (int s = 0; s < g.mdp.n_states; ++s) {
    for (int a = 0; a < kNumActions; ++a) {
      const Cell to = move(layout, g.cells[s], static_cast<Action>(a));
      g.mdp.next[static_cast<std::size_t>(s) * kNumActions + a] =
          g.cell_to_state[static_cast<std::size_t>(to.y * layout.width() + to.x)];
    }
  }
  return g;
}

}  // namespace hrac
