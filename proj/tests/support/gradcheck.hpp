#pragma once
// Finite-difference sweep over every network the agent trains, each against
// the loss it is actually trained on.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hrac/agent.hpp"
#include "hrac/embed.hpp"
#include "hrac/tinynn.hpp"

namespace gradcheck {

using namespace hrac;

struct ArchReport {
  std::string name;
  int points = 0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  double worst = 0.0;
};

inline std::vector<std::size_t> pick_indices(const nn::DenseNet& net, std::size_t n, Rng& rng) {
  // Every layer's last bias and weight, then uniform draws.
  std::vector<std::size_t> idx;
  std::size_t offset = 0;
  for (const auto& l : net.layers()) {
    offset += static_cast<std::size_t>(l.w.size());
    idx.push_back(offset - 1);
    offset += static_cast<std::size_t>(l.b.size());
    idx.push_back(offset - 1);
  }
  std::uniform_int_distribution<std::size_t> u(0, net.parameter_count() - 1);
  while (idx.size() < n) idx.push_back(u(rng));
  return idx;
}

inline GridState random_state(const agent::GridGeometry& geom, Rng& rng) {
  std::uniform_int_distribution<int> x(1, geom.width - 2), y(1, geom.height - 2);
  std::bernoulli_distribution key(0.5);
  return {x(rng), y(rng), key(rng)};
}

inline Subgoal random_goal(const agent::GridGeometry& geom, Rng& rng) {
  std::uniform_real_distribution<double> x(0.0, geom.max_x()), y(0.0, geom.max_y());
  return {x(rng), y(rng)};
}

inline void merge(ArchReport& r, const nn::GradientCheckResult& g) {
  r.checked += g.checked;
  r.kinks += g.kinks;
  r.worst = std::max(r.worst, g.max_relative_error);
}

/// points parameter draws per architecture, `per_point` parameters checked at each.
/// Empty `hidden` keeps each network's default widths.
inline std::vector<ArchReport> run(int points, std::size_t per_point, std::uint64_t seed,
                                   const std::vector<int>& hidden = {}) {
  const agent::GridGeometry geom{17, 13};
  ArchReport adj{"adjacency psi (contrastive)"}, adj_actor{"adjacency psi (actor term)"},
      hl_actor{"high-level actor"}, hl_critic{"high-level critic"}, ll_actor{"low-level actor"},
      ll_critic{"low-level critic"};
  Rng rng(seed);
  const int batch = 16;
  for (int p = 0; p < points; ++p) {
    embed::AdjacencyNetConfig ac;
    if (!hidden.empty()) ac.hidden = hidden;
    auto psi = embed::AdjacencyNet::create(ac, {geom.width, geom.height}, rng);
    // Wider embedding spread so both hinge branches are active.
    for (auto& l : psi.net.layers()) l.w *= 2.0;

    std::vector<adjacency::LabeledPair> pairs;
    std::bernoulli_distribution coin(0.5);
    for (int i = 0; i < batch; ++i) {
      const auto a = random_state(geom, rng), b = random_state(geom, rng);
      pairs.push_back({a.cell(), b.cell(), int(coin(rng))});
    }
    {
      const auto lg = embed::contrastive_loss(psi, pairs);
      auto loss = [&](const nn::DenseNet& net) {
        auto probe = psi;
        probe.net = net;
        return embed::contrastive_loss(probe, pairs).loss;
      };
      merge(adj, nn::check_gradients(psi.net, lg.grads, loss, pick_indices(psi.net, per_point, rng)));
      ++adj.points;
    }

    nn::Matrix pos(2, batch), goals(2, batch);
    for (int i = 0; i < batch; ++i) {
      const auto s = random_state(geom, rng);
      const auto g = random_goal(geom, rng);
      pos(0, i) = s.x;
      pos(1, i) = s.y;
      goals(0, i) = g.gx;
      goals(1, i) = g.gy;
    }
    {
      const auto grads = embed::adjacency_loss_param_grads(psi, pos, goals);
      auto loss = [&](const nn::DenseNet& net) {
        auto probe = psi;
        probe.net = net;
        return embed::adjacency_loss_batch(probe, pos, goals).values.mean();
      };
      merge(adj_actor, nn::check_gradients(psi.net, grads, loss, pick_indices(psi.net, per_point, rng)));
      ++adj_actor.points;
    }

    agent::HighLevelConfig hc;
    if (!hidden.empty()) hc.hidden = hidden;
    agent::HighLevelPolicy hl(hc, geom, rng);
    std::vector<GridState> states;
    for (int i = 0; i < batch; ++i) states.push_back(random_state(geom, rng));
    {
      const auto obj = agent::actor_objective(hl, &psi, states);
      auto loss = [&](const nn::DenseNet& net) {
        auto probe = hl;
        probe.actor = net;
        return agent::actor_objective(probe, &psi, states).loss;
      };
      merge(hl_actor, nn::check_gradients(hl.actor, obj.grads, loss, pick_indices(hl.actor, per_point, rng)));
      ++hl_actor.points;
    }
    {
      const nn::Matrix feats = hl.encode_states(states);
      const nn::Matrix in = hl.critic_input(feats, goals);
      nn::Matrix y(1, batch);
      std::normal_distribution<double> unit(0.0, 1.0);
      for (int i = 0; i < batch; ++i) y(0, i) = unit(rng);
      nn::ForwardCache cache;
      nn::Matrix dq;
      nn::mse(hl.critic1.forward(in, cache), y, &dq);
      auto grads = hl.critic1.zero_gradients();
      hl.critic1.backward(cache, dq, &grads);
      auto loss = [&](const nn::DenseNet& net) { return nn::mse(net.forward(in), y, nullptr); };
      merge(hl_critic, nn::check_gradients(hl.critic1, grads, loss, pick_indices(hl.critic1, per_point, rng)));
      ++hl_critic.points;
    }

    agent::LowLevelConfig lc;
    if (!hidden.empty()) lc.hidden = hidden;
    agent::LowLevelPolicy ll(lc, geom, rng);
    std::vector<agent::LowLevelStep> rollout;
    std::vector<double> returns;
    std::uniform_int_distribution<int> action(0, 3);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < batch; ++i) {
      agent::LowLevelStep st;
      st.s = random_state(geom, rng);
      st.relative_goal = agent::to_relative(random_goal(geom, rng), st.s);
      st.action = action(rng);
      rollout.push_back(st);
      returns.push_back(unit(rng));
    }
    {
      const auto obj = agent::low_level_objective(ll, rollout, returns);
      auto actor_loss = [&](const nn::DenseNet& net) {
        auto probe = ll;
        probe.actor = net;
        return agent::low_level_objective(probe, rollout, returns).actor_loss;
      };
      auto critic_loss = [&](const nn::DenseNet& net) {
        auto probe = ll;
        probe.critic = net;
        return agent::low_level_objective(probe, rollout, returns).critic_loss;
      };
      merge(ll_actor, nn::check_gradients(ll.actor, obj.actor_grads, actor_loss, pick_indices(ll.actor, per_point, rng)));
      ++ll_actor.points;
      merge(ll_critic,
            nn::check_gradients(ll.critic, obj.critic_grads, critic_loss, pick_indices(ll.critic, per_point, rng)));
      ++ll_critic.points;
    }
  }
  return {adj, adj_actor, hl_actor, hl_critic, ll_actor, ll_critic};
}

}  // namespace gradcheck
