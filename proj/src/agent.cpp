#include "hrac/agent.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace hrac::agent {

using nn::Matrix;
using nn::Vector;

Subgoal GridGeometry::clamp(const Subgoal& g) const {
  return {std::clamp(g.gx, 0.0, max_x()), std::clamp(g.gy, 0.0, max_y())};
}

void GridGeometry::encode_state(const GridState& s, double* out) const {
  out[0] = 2.0 * s.x / std::max(1.0, max_x()) - 1.0;
  out[1] = 2.0 * s.y / std::max(1.0, max_y()) - 1.0;
  out[2] = s.has_key ? 1.0 : 0.0;
}

void GridGeometry::encode_goal(const Subgoal& g, double* out) const {
  out[0] = 2.0 * g.gx / std::max(1.0, max_x()) - 1.0;
  out[1] = 2.0 * g.gy / std::max(1.0, max_y()) - 1.0;
}

void GridGeometry::encode_offset(const Subgoal& rel, double* out) const {
  out[0] = 2.0 * rel.gx / std::max(1.0, max_x());
  out[1] = 2.0 * rel.gy / std::max(1.0, max_y());
}

Subgoal goal_transition(const Subgoal& relative, const GridState& s_prev, const GridState& s_now) {
  return {relative.gx + s_prev.x - s_now.x, relative.gy + s_prev.y - s_now.y};
}

Subgoal quantize_goal(const Subgoal& g) {
  auto q = [](double v) { return std::ldexp(std::round(std::ldexp(v, kGoalFractionBits)), -kGoalFractionBits); };
  return {q(g.gx), q(g.gy)};
}

Subgoal to_relative(const Subgoal& absolute, const GridState& s) { return {absolute.gx - s.x, absolute.gy - s.y}; }
Subgoal to_absolute(const Subgoal& relative, const GridState& s) { return {relative.gx + s.x, relative.gy + s.y}; }

double intrinsic_reward(const GridState& s_next, const Subgoal& g) {
  return (std::abs(s_next.x - g.gx) <= 0.5 && std::abs(s_next.y - g.gy) <= 0.5) ? 1.0 : 0.0;
}

double intrinsic_reward_dense(const GridState& s_next, const Subgoal& g) {
  return -std::hypot(g.gx - s_next.x, g.gy - s_next.y);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  data_.reserve(capacity);
}

void ReplayBuffer::add(const HighLevelTransition& t) {
  if (data_.size() < capacity_) {
    data_.push_back(t);
  } else {
    data_[next_] = t;
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (data_.empty()) throw std::invalid_argument("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

namespace {

std::vector<int> chain(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

std::vector<nn::Activation> acts(std::size_t hidden, nn::Activation last) {
  std::vector<nn::Activation> a(hidden, nn::Activation::Relu);
  a.push_back(last);
  return a;
}

Matrix positions_of(std::span<const GridState> states) {
  Matrix p(2, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    p(0, static_cast<Eigen::Index>(i)) = states[i].x;
    p(1, static_cast<Eigen::Index>(i)) = states[i].y;
  }
  return p;
}

Vector softmax(const Vector& logits) {
  const Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

}  // namespace

HighLevelPolicy::HighLevelPolicy(const HighLevelConfig& cfg, GridGeometry geometry, Rng& rng)
    : actor(chain(kStateFeatures, cfg.hidden, kGoalFeatures), acts(cfg.hidden.size(), nn::Activation::Tanh), rng),
      critic1(chain(kStateFeatures + kGoalFeatures, cfg.hidden, 1), acts(cfg.hidden.size(), nn::Activation::Identity),
              rng),
      critic2(chain(kStateFeatures + kGoalFeatures, cfg.hidden, 1), acts(cfg.hidden.size(), nn::Activation::Identity),
              rng),
      cfg_(cfg),
      geom_(geometry) {
  actor_target = actor;
  critic1_target = critic1;
  critic2_target = critic2;
  actor_opt = nn::AdamState(actor, {cfg.actor_lr});
  critic1_opt = nn::AdamState(critic1, {cfg.critic_lr});
  critic2_opt = nn::AdamState(critic2, {cfg.critic_lr});
}

Matrix HighLevelPolicy::encode_states(std::span<const GridState> states) const {
  Matrix m(kStateFeatures, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) geom_.encode_state(states[i], m.col(static_cast<Eigen::Index>(i)).data());
  return m;
}

Matrix HighLevelPolicy::critic_input(const Matrix& state_features, const Matrix& goals) const {
  Matrix in(kStateFeatures + kGoalFeatures, goals.cols());
  in.topRows(kStateFeatures) = state_features;
  for (Eigen::Index j = 0; j < goals.cols(); ++j) {
    geom_.encode_goal({goals(0, j), goals(1, j)}, in.col(j).data() + kStateFeatures);
  }
  return in;
}

Matrix HighLevelPolicy::scale_offsets(const Matrix& tanh_out) const {
  Matrix o = tanh_out;
  o.row(0) *= geom_.max_x();
  o.row(1) *= geom_.max_y();
  return o;
}

Subgoal HighLevelPolicy::offset(const GridState& s) const {
  const GridState one[1] = {s};
  const Matrix o = scale_offsets(actor.forward(encode_states(one)));
  return {o(0, 0), o(1, 0)};
}

double HighLevelPolicy::q1(const GridState& s, const Subgoal& g) const {
  const GridState one[1] = {s};
  Matrix goal(2, 1);
  goal << g.gx, g.gy;
  return critic1.forward(critic_input(encode_states(one), goal))(0, 0);
}

Subgoal emit_subgoal(const HighLevelPolicy& hl, const GridState& s, bool explore, Rng& rng) {
  Subgoal off = hl.offset(s);
  if (explore) {
    std::normal_distribution<double> noise(0.0, hl.config().sigma);
    off.gx += noise(rng);
    off.gy += noise(rng);
  }
  return quantize_goal(hl.geometry().clamp(to_absolute(off, s)));
}

ActorObjective actor_objective(const HighLevelPolicy& hl, const embed::AdjacencyNet* psi,
                               std::span<const GridState> states) {
  ActorObjective out;
  const auto n = static_cast<double>(states.size());
  const Matrix feats = hl.encode_states(states);
  nn::ForwardCache actor_cache;
  const Matrix squashed = hl.actor.forward(feats, actor_cache);
  const Matrix goals = positions_of(states) + hl.scale_offsets(squashed);

  nn::ForwardCache critic_cache;
  const Matrix q = hl.critic1.forward(hl.critic_input(feats, goals), critic_cache);
  const Matrix dq = Matrix::Constant(1, q.cols(), -1.0 / n);
  const Matrix d_in = hl.critic1.backward(critic_cache, dq, nullptr);
  Matrix d_goal = d_in.bottomRows(kGoalFeatures);
  d_goal.row(0) *= 2.0 / std::max(1.0, hl.geometry().max_x());
  d_goal.row(1) *= 2.0 / std::max(1.0, hl.geometry().max_y());
  out.loss = -q.mean();

  const double eta = hl.config().eta;
  if (psi != nullptr) {
    const auto adj = embed::adjacency_loss_batch(*psi, positions_of(states), goals);
    out.adjacency_loss = adj.values.mean();
    if (eta != 0.0) {
      d_goal += (eta / n) * adj.grad_goals;
      out.loss += eta * out.adjacency_loss;
    }
  }

  // d goal / d tanh = output scale.
  Matrix d_squashed = d_goal;
  d_squashed.row(0) *= hl.geometry().max_x();
  d_squashed.row(1) *= hl.geometry().max_y();
  out.grads = hl.actor.zero_gradients();
  hl.actor.backward(actor_cache, d_squashed, &out.grads);
  return out;
}

HighLevelStats actor_update(HighLevelPolicy& hl, const embed::AdjacencyNet* psi, std::span<const GridState> states) {
  HighLevelStats st;
  const auto obj = actor_objective(hl, psi, states);
  st.actor_loss = obj.loss;
  st.adjacency_loss = obj.adjacency_loss;
  nn::adam_step(hl.actor, obj.grads, hl.actor_opt);
  st.actor_updated = true;
  return st;
}

HighLevelStats train_high_level(HighLevelPolicy& hl, const embed::AdjacencyNet* psi, const ReplayBuffer& buffer,
                                Rng& rng) {
  HighLevelStats st;
  const auto& cfg = hl.config();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  if (buffer.size() < batch) {
    std::cerr << "warning: replay buffer holds " << buffer.size() << " < " << batch << " transitions; skipping\n";
    return st;
  }
  const auto idx = buffer.sample_indices(batch, rng);
  const auto b = static_cast<Eigen::Index>(batch);
  std::vector<GridState> s(batch), s_next(batch);
  Matrix goals(2, b);
  Matrix rewards(1, b), not_done(1, b);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto& t = buffer.at(idx[i]);
    const auto j = static_cast<Eigen::Index>(i);
    s[i] = t.s;
    s_next[i] = t.s_next;
    goals(0, j) = t.g.gx;
    goals(1, j) = t.g.gy;
    rewards(0, j) = cfg.reward_scale * t.reward;
    not_done(0, j) = t.done ? 0.0 : 1.0;
  }

  // Target: clipped double-Q with smoothed target policy.
  const Matrix feats_next = hl.encode_states(s_next);
  Matrix next_goals = positions_of(s_next) + hl.scale_offsets(hl.actor_target.forward(feats_next));
  const auto& geom = hl.geometry();
  std::normal_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index j = 0; j < b; ++j) {
    const double sx = geom.max_x(), sy = geom.max_y();
    const double nx = std::clamp(cfg.policy_noise * sx * unit(rng), -cfg.noise_clip * sx, cfg.noise_clip * sx);
    const double ny = std::clamp(cfg.policy_noise * sy * unit(rng), -cfg.noise_clip * sy, cfg.noise_clip * sy);
    const Subgoal g = geom.clamp({next_goals(0, j) + nx, next_goals(1, j) + ny});
    next_goals(0, j) = g.gx;
    next_goals(1, j) = g.gy;
  }
  const Matrix next_in = hl.critic_input(feats_next, next_goals);
  const Matrix q_next = hl.critic1_target.forward(next_in).cwiseMin(hl.critic2_target.forward(next_in));
  const Matrix y = rewards + cfg.gamma * not_done.cwiseProduct(q_next);

  const Matrix feats = hl.encode_states(s);
  const Matrix in = hl.critic_input(feats, goals);
  auto critic_step = [&](nn::DenseNet& critic, nn::AdamState& opt) {
    nn::ForwardCache cache;
    const Matrix q = critic.forward(in, cache);
    Matrix dq;
    const double loss = nn::mse(q, y, &dq);
    auto grads = critic.zero_gradients();
    critic.backward(cache, dq, &grads);
    nn::adam_step(critic, grads, opt);
    return loss;
  };
  st.critic_loss = critic_step(hl.critic1, hl.critic1_opt) + critic_step(hl.critic2, hl.critic2_opt);
  st.updated = true;
  ++hl.critic_updates;

  if (hl.critic_updates % cfg.policy_freq == 0) {
    const auto a = actor_update(hl, psi, s);
    st.actor_updated = true;
    st.actor_loss = a.actor_loss;
    st.adjacency_loss = a.adjacency_loss;
    nn::soft_update(hl.actor_target, hl.actor, cfg.tau);
    nn::soft_update(hl.critic1_target, hl.critic1, cfg.tau);
    nn::soft_update(hl.critic2_target, hl.critic2, cfg.tau);
  }
  return st;
}

HighLevelTransition negreward_wrap(const embed::AdjacencyNet& psi, HighLevelTransition t) {
  if (embed::adjacency_loss(psi, t.s, t.g).value > 0.0) t.reward -= 1.0;
  return t;
}

LowLevelPolicy::LowLevelPolicy(const LowLevelConfig& cfg, GridGeometry geometry, Rng& rng)
    : actor(chain(kStateFeatures + kGoalFeatures, cfg.hidden, kNumActions),
            acts(cfg.hidden.size(), nn::Activation::Identity), rng),
      critic(chain(kStateFeatures + kGoalFeatures, cfg.hidden, 1), acts(cfg.hidden.size(), nn::Activation::Identity),
             rng),
      actor_opt(actor, {cfg.actor_lr}),
      critic_opt(critic, {cfg.critic_lr}),
      cfg_(cfg),
      geom_(geometry) {}

Matrix LowLevelPolicy::encode(std::span<const GridState> states, std::span<const Subgoal> relative_goals) const {
  Matrix m(kStateFeatures + kGoalFeatures, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    double* col = m.col(static_cast<Eigen::Index>(i)).data();
    geom_.encode_state(states[i], col);
    geom_.encode_offset(relative_goals[i], col + kStateFeatures);
  }
  return m;
}

Vector LowLevelPolicy::probabilities(const GridState& s, const Subgoal& relative_goal) const {
  const GridState st[1] = {s};
  const Subgoal g[1] = {relative_goal};
  return softmax(actor.forward(encode(st, g)).col(0));
}

double LowLevelPolicy::value(const GridState& s, const Subgoal& relative_goal) const {
  const GridState st[1] = {s};
  const Subgoal g[1] = {relative_goal};
  return critic.forward(encode(st, g))(0, 0);
}

int LowLevelPolicy::act(const GridState& s, const Subgoal& relative_goal, bool greedy, Rng& rng) const {
  const Vector p = probabilities(s, relative_goal);
  if (greedy) {
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    return static_cast<int>(best);
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng), acc = 0.0;
  for (int a = 0; a < kNumActions; ++a) {
    acc += p(a);
    if (r < acc) return a;
  }
  return kNumActions - 1;
}

std::vector<double> n_step_returns(const LowLevelPolicy& ll, std::span<const LowLevelStep> rollout) {
  const auto n = rollout.size();
  std::vector<double> ret(n, 0.0);
  // Bootstrap values for every step that needs one, evaluated as a single batch.
  std::vector<GridState> bs;
  std::vector<Subgoal> bg;
  std::vector<std::size_t> which;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& st = rollout[t];
    if (!st.terminal && (st.cut || t + 1 == n)) {
      bs.push_back(st.s_next);
      bg.push_back(st.relative_goal_next);
      which.push_back(t);
    }
  }
  std::vector<double> boot(n, 0.0);
  if (!which.empty()) {
    const Matrix v = ll.critic.forward(ll.encode(bs, bg));
    for (std::size_t i = 0; i < which.size(); ++i) boot[which[i]] = v(0, static_cast<Eigen::Index>(i));
  }
  const double gamma = ll.config().gamma;
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const auto& st = rollout[t];
    if (st.terminal) running = st.reward;
    else if (st.cut || t + 1 == n) running = st.reward + gamma * boot[t];
    else running = st.reward + gamma * running;
    ret[t] = running;
  }
  return ret;
}

LowLevelObjective low_level_objective(const LowLevelPolicy& ll, std::span<const LowLevelStep> rollout,
                                      std::span<const double> returns) {
  LowLevelObjective out;
  const auto n = static_cast<Eigen::Index>(rollout.size());
  std::vector<GridState> s;
  std::vector<Subgoal> g;
  for (const auto& step : rollout) {
    s.push_back(step.s);
    g.push_back(step.relative_goal);
  }
  const Matrix in = ll.encode(s, g);
  Matrix target(1, n);
  for (Eigen::Index i = 0; i < n; ++i) target(0, i) = returns[static_cast<std::size_t>(i)];

  nn::ForwardCache critic_cache;
  const Matrix v = ll.critic.forward(in, critic_cache);
  Matrix dv;
  out.critic_loss = nn::mse(v, target, &dv);
  // Advantages are constants for the actor.
  const Matrix advantage = target - v;

  nn::ForwardCache actor_cache;
  const Matrix logits = ll.actor.forward(in, actor_cache);
  Matrix dlogits(kNumActions, n);
  const double beta = ll.config().entropy_weight;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector p = softmax(logits.col(i));
    const Vector logp = p.array().max(1e-300).log().matrix();
    const double entropy = -p.dot(logp);
    const int a = rollout[static_cast<std::size_t>(i)].action;
    const double adv = advantage(0, i);
    out.actor_loss += -logp(a) * adv - beta * entropy;
    out.entropy += entropy;
    Vector onehot = Vector::Zero(kNumActions);
    onehot(a) = 1.0;
    // d(-logp(a) * A)/dz = -(onehot - p) * A ; d(-beta * H)/dz = beta * p * (logp + H)
    dlogits.col(i) = (-(onehot - p) * adv + beta * (p.array() * (logp.array() + entropy)).matrix()) / double(n);
  }
  out.actor_loss /= double(n);
  out.entropy /= double(n);

  out.critic_grads = ll.critic.zero_gradients();
  ll.critic.backward(critic_cache, dv, &out.critic_grads);
  out.actor_grads = ll.actor.zero_gradients();
  ll.actor.backward(actor_cache, dlogits, &out.actor_grads);
  return out;
}

LowLevelStats train_low_level(LowLevelPolicy& ll, std::span<const LowLevelStep> rollout) {
  LowLevelStats st;
  if (rollout.empty()) return st;
  const auto returns = n_step_returns(ll, rollout);
  const auto obj = low_level_objective(ll, rollout, returns);
  st.critic_loss = obj.critic_loss;
  st.actor_loss = obj.actor_loss;
  st.entropy = obj.entropy;
  nn::adam_step(ll.critic, obj.critic_grads, ll.critic_opt);
  nn::adam_step(ll.actor, obj.actor_grads, ll.actor_opt);
  return st;
}

void save_checkpoint(const HighLevelPolicy& hl, const LowLevelPolicy& ll, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::save(hl.actor, dir / "hl_actor.bin");
  nn::save(hl.critic1, dir / "hl_critic1.bin");
  nn::save(hl.critic2, dir / "hl_critic2.bin");
  nn::save(ll.actor, dir / "ll_actor.bin");
  nn::save(ll.critic, dir / "ll_critic.bin");
}

void load_checkpoint(HighLevelPolicy& hl, LowLevelPolicy& ll, const std::filesystem::path& dir) {
  auto checked = [](nn::DenseNet loaded, const nn::DenseNet& like, const std::string& name) {
    if (loaded.sizes() != like.sizes()) throw std::runtime_error(name + ": architecture mismatch");
    return loaded;
  };
  hl.actor = checked(nn::load(dir / "hl_actor.bin"), hl.actor, "hl_actor");
  hl.critic1 = checked(nn::load(dir / "hl_critic1.bin"), hl.critic1, "hl_critic1");
  hl.critic2 = checked(nn::load(dir / "hl_critic2.bin"), hl.critic2, "hl_critic2");
  ll.actor = checked(nn::load(dir / "ll_actor.bin"), ll.actor, "ll_actor");
  ll.critic = checked(nn::load(dir / "ll_critic.bin"), ll.critic, "ll_critic");
  hl.actor_target = hl.actor;
  hl.critic1_target = hl.critic1;
  hl.critic2_target = hl.critic2;
}

}  // namespace hrac::agent
