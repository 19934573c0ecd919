#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hrac/embed.hpp"
#include "hrac/gridworld.hpp"
#include "hrac/tinynn.hpp"

namespace hrac::agent {

/// Grid extents shared by feature encoders, subgoal clamping and output scaling.
struct GridGeometry {
  int width = 17;
  int height = 13;

  double max_x() const { return width - 1; }
  double max_y() const { return height - 1; }
  Subgoal clamp(const Subgoal& g) const;
  /// Position (x, y) in [-1, 1], key flag in {0, 1}.
  void encode_state(const GridState& s, double* out) const;
  /// Absolute goal to [-1, 1].
  void encode_goal(const Subgoal& g, double* out) const;
  /// Relative goal scaled by the same factors as encode_goal (no shift).
  void encode_offset(const Subgoal& rel, double* out) const;
};

inline constexpr int kStateFeatures = 3;
inline constexpr int kGoalFeatures = 2;

/// h(g, s_prev, s_now) = g + s_prev - s_now on directional (relative) goals.
Subgoal goal_transition(const Subgoal& relative, const GridState& s_prev, const GridState& s_now);
Subgoal to_relative(const Subgoal& absolute, const GridState& s);

/// Emitted subgoals sit on a 2^-20 grid. Coordinates below 2^30 then carry at most
/// 50 significant bits, so shifting by integer displacements never rounds and
/// the window's absolute goal survives goal_transition bit for bit.
inline constexpr int kGoalFractionBits = 20;
Subgoal quantize_goal(const Subgoal& g);
Subgoal to_absolute(const Subgoal& relative, const GridState& s);

/// 1 when both coordinates of the agent lie within 0.5 of the subgoal.
double intrinsic_reward(const GridState& s_next, const Subgoal& g);
/// -||g - phi(s_next)||, the dense alternative.
double intrinsic_reward_dense(const GridState& s_next, const Subgoal& g);

struct HighLevelTransition {
  GridState s;
  Subgoal g;  // absolute desired position at emission time
  double reward = 0.0;
  GridState s_next;
  bool done = false;
  int length = 0;  // environment steps in the window; < k only at episode end
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(const HighLevelTransition& t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const HighLevelTransition& at(std::size_t i) const { return data_[i]; }
  /// Uniform with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<HighLevelTransition> data_;
};

struct HighLevelConfig {
  std::vector<int> hidden{300, 300};
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  std::size_t buffer_capacity = 20000;
  int batch_size = 64;
  double tau = 0.001;
  int policy_freq = 2;
  double gamma = 0.99;
  double sigma = 5.0;
  double eta = 20.0;
  /// Target-policy smoothing, as fractions of the offset scale.
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  double reward_scale = 1.0;
};

/// TD3 high level: actor emits a tanh-squashed offset scaled to the grid extents.
class HighLevelPolicy {
 public:
  HighLevelPolicy(const HighLevelConfig& cfg, GridGeometry geometry, Rng& rng);

  const HighLevelConfig& config() const { return cfg_; }
  HighLevelConfig& config() { return cfg_; }
  const GridGeometry& geometry() const { return geom_; }

  /// Deterministic actor offset for a single state.
  Subgoal offset(const GridState& s) const;
  double q1(const GridState& s, const Subgoal& g) const;

  nn::DenseNet actor, actor_target;
  nn::DenseNet critic1, critic2, critic1_target, critic2_target;
  nn::AdamState actor_opt, critic1_opt, critic2_opt;
  std::int64_t critic_updates = 0;

  nn::Matrix encode_states(std::span<const GridState> states) const;
  /// Stacks encoded states over encoded absolute goals (5 x B).
  nn::Matrix critic_input(const nn::Matrix& state_features, const nn::Matrix& goals) const;
  /// Applies the output scale to a tanh actor output (2 x B).
  nn::Matrix scale_offsets(const nn::Matrix& tanh_out) const;

 private:
  HighLevelConfig cfg_;
  GridGeometry geom_;
};

/// Actor offset added to the position, optional Gaussian noise, clamped to the grid.
Subgoal emit_subgoal(const HighLevelPolicy& hl, const GridState& s, bool explore, Rng& rng);

struct HighLevelStats {
  bool updated = false;
  bool actor_updated = false;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double adjacency_loss = 0.0;  // batch mean, before the eta factor
};

struct ActorObjective {
  double loss = 0.0;  // -mean Q1 + eta * mean adjacency loss
  double adjacency_loss = 0.0;
  nn::Gradients grads;  // actor parameters only
};

/// Actor loss and gradient without touching any parameters. The critic and psi are held fixed.
ActorObjective actor_objective(const HighLevelPolicy& hl, const embed::AdjacencyNet* psi,
                               std::span<const GridState> states);

/// One actor step on a batch of states: minimizes -Q1(s, mu(s)) + eta * L_adj(s, mu(s)).
/// psi may be null or eta zero, in which case the adjacency term is absent.
HighLevelStats actor_update(HighLevelPolicy& hl, const embed::AdjacencyNet* psi, std::span<const GridState> states);

/// One TD3 iteration on a sampled batch; no-op with a warning if the buffer is
/// smaller than the batch size.
HighLevelStats train_high_level(HighLevelPolicy& hl, const embed::AdjacencyNet* psi, const ReplayBuffer& buffer,
                                Rng& rng);

/// NegReward ablation: -1 on the stored reward if the subgoal is not adjacent.
HighLevelTransition negreward_wrap(const embed::AdjacencyNet& psi, HighLevelTransition t);

struct LowLevelConfig {
  std::vector<int> hidden{300, 300};
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  double entropy_weight = 0.01;
  double gamma = 0.99;
  int n_steps = 5;
  /// Reaching the subgoal ends the low-level return (no bootstrap past it).
  bool terminal_on_reach = true;
  bool dense_reward = false;
};

/// A2C low level over (state, relative subgoal).
class LowLevelPolicy {
 public:
  LowLevelPolicy(const LowLevelConfig& cfg, GridGeometry geometry, Rng& rng);

  const LowLevelConfig& config() const { return cfg_; }
  const GridGeometry& geometry() const { return geom_; }

  nn::Vector probabilities(const GridState& s, const Subgoal& relative_goal) const;
  double value(const GridState& s, const Subgoal& relative_goal) const;
  int act(const GridState& s, const Subgoal& relative_goal, bool greedy, Rng& rng) const;

  nn::Matrix encode(std::span<const GridState> states, std::span<const Subgoal> relative_goals) const;

  nn::DenseNet actor, critic;
  nn::AdamState actor_opt, critic_opt;

 private:
  LowLevelConfig cfg_;
  GridGeometry geom_;
};

struct LowLevelStep {
  GridState s;
  Subgoal relative_goal;
  int action = 0;
  double reward = 0.0;
  GridState s_next;
  Subgoal relative_goal_next;  // h applied with the same window's goal
  bool terminal = false;       // no bootstrap after this step
  bool cut = false;            // window or episode boundary: bootstrap from V(s_next, relative_goal_next)
};

struct LowLevelStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double entropy = 0.0;
};

struct LowLevelObjective {
  double critic_loss = 0.0;
  double actor_loss = 0.0;  // policy gradient with fixed advantages, minus the entropy bonus
  double entropy = 0.0;
  nn::Gradients critic_grads, actor_grads;
};

/// A2C losses for given returns; advantages use the current critic as a constant.
LowLevelObjective low_level_objective(const LowLevelPolicy& ll, std::span<const LowLevelStep> rollout,
                                      std::span<const double> returns);

/// n-step returns computed backward over the segment, then one critic and one actor Adam step.
LowLevelStats train_low_level(LowLevelPolicy& ll, std::span<const LowLevelStep> rollout);

/// Returns used by train_low_level (exposed for testing).
std::vector<double> n_step_returns(const LowLevelPolicy& ll, std::span<const LowLevelStep> rollout);

void save_checkpoint(const HighLevelPolicy& hl, const LowLevelPolicy& ll, const std::filesystem::path& dir);
void load_checkpoint(HighLevelPolicy& hl, LowLevelPolicy& ll, const std::filesystem::path& dir);

}  // namespace hrac::agent
