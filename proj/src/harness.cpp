#include "hrac/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <optional>
#include <sstream>
#include <stdexcept>

#include "hrac/adjacency.hpp"
#include "hrac/agent.hpp"
#include "hrac/embed.hpp"
#include "hrac/oracle.hpp"

namespace fs = std::filesystem;

namespace hrac::harness {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

EvalResult evaluate_policy(const EnvConfig& env, const agent::HighLevelPolicy& hl, const agent::LowLevelPolicy& ll,
                           const embed::AdjacencyNet* psi, int k, int episodes, Rng& rng,
                           std::vector<std::pair<GridState, Subgoal>>* emitted) {
  EvalResult r;
  for (int e = 0; e < episodes; ++e) {
    GridState s = reset(env, rng);
    Subgoal goal_abs{}, goal_rel{};
    double total = 0.0;
    for (int t = 0;; ++t) {
      if (t % k == 0) {
        goal_abs = agent::emit_subgoal(hl, s, false, rng);
        goal_rel = agent::to_relative(goal_abs, s);
        ++r.subgoals;
        if (psi) r.adjacent_subgoals += embed::adjacency_loss(*psi, s, goal_abs).value == 0.0;
        if (emitted) emitted->emplace_back(s, goal_abs);
      }
      const auto res = step(env, s, ll.act(s, goal_rel, true, rng), t, rng);
      total += res.reward;
      goal_rel = agent::goal_transition(goal_rel, s, res.next_state);
      s = res.next_state;
      if (res.done) {
        r.success_rate += res.terminal;
        r.mean_length += t + 1;
        break;
      }
    }
    r.mean_reward += total;
  }
  if (episodes > 0) {
    r.mean_reward /= episodes;
    r.success_rate /= episodes;
    r.mean_length /= episodes;
  }
  return r;
}

EvalResult evaluate_checkpoint(const fs::path& dir, int episodes, std::uint64_t seed) {
  RunConfig cfg = load_config((dir / "config.txt").string());
  cfg.resolve();
  const EnvConfig env = make_env_config(cfg.env, cfg.noise);
  const agent::GridGeometry geom{env.layout.width(), env.layout.height()};
  Rng init(seed);
  agent::HighLevelPolicy hl(cfg.high, geom, init);
  agent::LowLevelPolicy ll(cfg.low, geom, init);
  agent::load_checkpoint(hl, ll, dir);
  std::optional<embed::AdjacencyNet> psi;
  if (fs::exists(dir / "psi.bin")) psi = embed::load_checkpoint(dir / "psi.bin");
  Rng rng(seed);
  return evaluate_policy(env, hl, ll, psi ? &*psi : nullptr, cfg.k, episodes, rng, nullptr);
}

namespace {

using Clock = std::chrono::steady_clock;

// Independent streams per purpose so that e.g. evaluation frequency cannot
// shift the training stream.
Rng stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id), 0x68726163u};
  return Rng(seq);
}

enum Stream : std::uint64_t { kInit = 1, kEnv, kPolicy, kTrain, kAdj, kEval };

struct PhaseTimer {
  std::map<std::string, double> seconds;
  std::vector<std::string> order;
  void add(const std::string& name, Clock::duration d) {
    if (!seconds.count(name)) order.push_back(name);
    seconds[name] += std::chrono::duration<double>(d).count();
  }
};

class Trainer {
 public:
  Trainer(const RunConfig& cfg, fs::path dir)
      : cfg_(cfg),
        dir_(std::move(dir)),
        env_(make_env_config(cfg.env, cfg.noise)),
        geom_{env_.layout.width(), env_.layout.height()},
        init_rng_(stream(cfg.seed, kInit)),
        env_rng_(stream(cfg.seed, kEnv)),
        policy_rng_(stream(cfg.seed, kPolicy)),
        train_rng_(stream(cfg.seed, kTrain)),
        adj_rng_(stream(cfg.seed, kAdj)),
        hl_(cfg.high, geom_, init_rng_),
        ll_(cfg.low, geom_, init_rng_),
        replay_(cfg.high.buffer_capacity),
        matrix_(cfg.k) {
    embed::AdjacencyNetConfig ac;
    ac.k = cfg.k;
    ac.eps_k = cfg.eps_k;
    ac.delta = cfg.delta;
    psi_ = embed::AdjacencyNet::create(ac, {geom_.width, geom_.height}, init_rng_);
    psi_opt_ = nn::AdamState(psi_.net, {cfg.adj_lr});
  }

  RunSummary run();

 private:
  bool uses_matrix() const {
    return cfg_.variant == Variant::Hrac || cfg_.variant == Variant::NegReward || cfg_.variant == Variant::EtaSweep;
  }
  bool adjacency_in_actor() const { return cfg_.variant != Variant::NegReward && cfg_.eta != 0.0; }

  void open_outputs();
  void event(const std::string& name, const std::string& detail);
  void warmup();
  void adjacency_round(bool pretrain);
  MetricsRecord episode();
  EvalResult evaluate(int episodes, std::uint64_t tag, std::vector<std::pair<GridState, Subgoal>>* emitted);
  void check_finite(double v, const char* what);
  void write_summary(const RunSummary& s);

  RunConfig cfg_;
  fs::path dir_;
  EnvConfig env_;
  agent::GridGeometry geom_;
  Rng init_rng_, env_rng_, policy_rng_, train_rng_, adj_rng_;
  agent::HighLevelPolicy hl_;
  agent::LowLevelPolicy ll_;
  agent::ReplayBuffer replay_;
  embed::AdjacencyNet psi_;
  nn::AdamState psi_opt_;
  adjacency::AdjacencyMatrix matrix_;
  adjacency::TrajectoryBuffer buffer_;
  std::optional<adjacency::AdjacencyMatrix> oracle_;

  std::int64_t env_steps_ = 0;
  std::int64_t episodes_ = 0;
  std::int64_t steps_since_round_ = 0;
  std::int64_t matrix_updates_ = 0;
  std::int64_t distill_rounds_ = 0;
  std::int64_t events_ = 0;
  std::int64_t policy_forwards_ = 0;
  double last_distill_loss_ = 0.0;
  std::deque<std::pair<GridState, Subgoal>> recent_emissions_;
  MetricsRecord last_record_;

  std::ofstream metrics_, events_out_, eval_out_;
  PhaseTimer timer_;
};

void Trainer::open_outputs() {
  fs::create_directories(dir_);
  const std::string header = "# " + nlohmann::ordered_json{{"format", "hrac-metrics"}, {"version", 1}, {"config", to_json(cfg_)}}.dump() + "\n";
  metrics_.open(dir_ / "metrics.csv");
  events_out_.open(dir_ / "events.csv");
  eval_out_.open(dir_ / "eval.csv");
  if (!metrics_ || !events_out_ || !eval_out_) throw std::runtime_error("cannot write into " + dir_.string());
  metrics_ << header
           << "episode,env_steps,episode_reward,success,length,subgoals,adjacency_loss_mean,adjacent_fraction,"
              "distill_loss,hl_critic_loss,ll_entropy,matrix_updates,distill_rounds,buffer_trajectories\n";
  events_out_ << header << "seq,env_steps,episode,event,detail\n";
  eval_out_ << header << "episode,env_steps,mean_reward,success_rate,mean_length,adjacent_fraction\n";
}

void Trainer::event(const std::string& name, const std::string& detail) {
  events_out_ << events_++ << ',' << env_steps_ << ',' << episodes_ << ',' << name << ',' << detail << '\n';
}

void Trainer::check_finite(double v, const char* what) {
  if (std::isfinite(v)) return;
  nlohmann::ordered_json dump{{"error", std::string("non-finite ") + what},
                              {"episode", episodes_},
                              {"env_steps", env_steps_},
                              {"hl_critic_updates", hl_.critic_updates},
                              {"hl_actor_finite", hl_.actor.all_finite()},
                              {"hl_critic1_finite", hl_.critic1.all_finite()},
                              {"hl_critic2_finite", hl_.critic2.all_finite()},
                              {"ll_actor_finite", ll_.actor.all_finite()},
                              {"ll_critic_finite", ll_.critic.all_finite()},
                              {"psi_finite", psi_.net.all_finite()},
                              {"last_distill_loss", last_distill_loss_},
                              {"config", to_json(cfg_)}};
  std::ofstream(dir_ / "nan_dump.json") << dump.dump(2) << '\n';
  metrics_.flush();
  events_out_.flush();
  throw std::runtime_error(std::string("non-finite ") + what + " at episode " + std::to_string(episodes_) +
                           "; diagnostics in " + (dir_ / "nan_dump.json").string());
}

void Trainer::warmup() {
  // Uniform random actions only; the policies are never queried here.
  std::uniform_int_distribution<int> any(0, kNumActions - 1);
  int warm_episode = 0;
  while (env_steps_ < cfg_.warmup_steps) {
    GridState s = reset(env_, env_rng_);
    adjacency::Trajectory traj{{s.cell()}, warm_episode++};
    for (int t = 0; env_steps_ < cfg_.warmup_steps; ++t) {
      const auto res = step(env_, s, any(policy_rng_), t, env_rng_);
      ++env_steps_;
      s = res.next_state;
      traj.states.push_back(s.cell());
      if (res.done) break;
    }
    buffer_.add(std::move(traj));
  }
  event("warmup_done", "trajectories=" + std::to_string(buffer_.size()) +
                           " policy_forwards=" + std::to_string(policy_forwards_));
}

void Trainer::adjacency_round(bool pretrain) {
  embed::DistillOptions opts;
  opts.epochs = pretrain ? cfg_.pretrain_epochs : cfg_.finetune_epochs;
  opts.batches_per_epoch = cfg_.adj_batches_per_epoch;
  opts.batch_size = cfg_.adj_batch_size;
  opts.balanced = cfg_.balanced_pairs;
  embed::DistillStats stats;
  switch (cfg_.variant) {
    case Variant::Hrac:
    case Variant::NegReward:
    case Variant::EtaSweep:
      matrix_.update(buffer_);
      ++matrix_updates_;
      event("matrix_update", "cells=" + std::to_string(matrix_.size()) + " ones=" + std::to_string(matrix_.count_ones()));
      if (matrix_.size() >= 2) stats = embed::distill(psi_, psi_opt_, matrix_, opts, adj_rng_);
      break;
    case Variant::HracOracle: {
      if (!oracle_) {
        const auto graph = grid_graph(env_.layout);
        const auto d = oracle::shortest_transition_distance(graph.mdp);
        oracle_ = adjacency::from_dense(cfg_.k, graph.cells, oracle::perfect_adjacency_matrix(d, cfg_.k, true));
      }
      ++matrix_updates_;
      event("matrix_update", "oracle cells=" + std::to_string(oracle_->size()));
      stats = embed::distill(psi_, psi_opt_, *oracle_, opts, adj_rng_);
      break;
    }
    case Variant::NoAdj: {
      ++matrix_updates_;
      event("matrix_update", "none (trajectory pairs)");
      const int k = cfg_.k, mult = cfg_.noadj_multiplier;
      const auto& buf = buffer_;
      stats = embed::distill_with(
          psi_, psi_opt_, [&](int n, Rng& r) { return adjacency::sample_pairs_noadj(buf, n, k, mult, r); }, opts,
          adj_rng_);
      break;
    }
  }
  if (!stats.epoch_loss.empty()) {
    last_distill_loss_ = stats.epoch_loss.back();
    check_finite(last_distill_loss_, "distillation loss");
  }
  ++distill_rounds_;
  event(pretrain ? "pretrain" : "finetune",
        "epochs=" + std::to_string(stats.epoch_loss.size()) + " loss=" + fmt(last_distill_loss_));
  buffer_.clear();
  event("buffer_clear", "size=" + std::to_string(buffer_.size()));
  steps_since_round_ = 0;
}

MetricsRecord Trainer::episode() {
  MetricsRecord rec;
  rec.episode = episodes_;
  const int k = cfg_.k;
  GridState s = reset(env_, env_rng_);
  adjacency::Trajectory traj{{s.cell()}, static_cast<int>(episodes_)};
  std::vector<agent::LowLevelStep> segment;
  std::vector<agent::HighLevelTransition> windows;
  GridState window_start = s;
  Subgoal goal_abs{}, goal_rel{};
  double window_reward = 0.0, adj_sum = 0.0, entropy_sum = 0.0;
  int window_len = 0, adjacent = 0, ll_updates = 0;

  auto flush_segment = [&] {
    if (segment.empty()) return;
    const auto st = agent::train_low_level(ll_, segment);
    check_finite(st.critic_loss, "low-level critic loss");
    check_finite(st.actor_loss, "low-level actor loss");
    entropy_sum += st.entropy;
    ++ll_updates;
    segment.clear();
  };
  auto close_window = [&](const GridState& s_end, bool terminal) {
    agent::HighLevelTransition tr{window_start, goal_abs, window_reward, s_end, terminal, window_len};
    if (cfg_.variant == Variant::NegReward) tr = agent::negreward_wrap(psi_, tr);
    windows.push_back(tr);
  };

  for (int t = 0;; ++t) {
    if (t % k == 0) {
      if (t > 0) close_window(s, false);
      goal_abs = agent::emit_subgoal(hl_, s, true, policy_rng_);
      ++policy_forwards_;
      goal_rel = agent::to_relative(goal_abs, s);
      window_start = s;
      window_reward = 0.0;
      window_len = 0;
      const double loss = embed::adjacency_loss(psi_, s, goal_abs).value;
      adj_sum += loss;
      adjacent += loss == 0.0;
      ++rec.subgoals;
      recent_emissions_.emplace_back(s, goal_abs);
      if (recent_emissions_.size() > 5000) recent_emissions_.pop_front();
    }
    const int a = ll_.act(s, goal_rel, false, policy_rng_);
    ++policy_forwards_;
    const auto res = step(env_, s, a, t, env_rng_);
    ++env_steps_;
    ++steps_since_round_;
    const Subgoal goal_rel_next = agent::goal_transition(goal_rel, s, res.next_state);
    const bool reached = agent::intrinsic_reward(res.next_state, goal_abs) > 0.0;
    const double r_int = cfg_.low.dense_reward ? agent::intrinsic_reward_dense(res.next_state, goal_abs) : (reached ? 1.0 : 0.0);
    window_reward += res.reward;
    rec.episode_reward += res.reward;
    ++window_len;
    const bool boundary = (t + 1) % k == 0 || res.done;
    segment.push_back({s, goal_rel, a, r_int, res.next_state, goal_rel_next,
                       res.terminal || (cfg_.low.terminal_on_reach && reached), boundary});
    if (static_cast<int>(segment.size()) >= cfg_.low.n_steps || res.done) flush_segment();
    s = res.next_state;
    goal_rel = goal_rel_next;
    traj.states.push_back(s.cell());
    if (res.done) {
      close_window(s, res.terminal);
      rec.success = res.terminal;
      rec.length = t + 1;
      break;
    }
  }
  flush_segment();
  buffer_.add(std::move(traj));
  for (const auto& w : windows) replay_.add(w);

  const int updates = cfg_.hl_updates_per_episode > 0 ? cfg_.hl_updates_per_episode : static_cast<int>(windows.size());
  const embed::AdjacencyNet* psi = adjacency_in_actor() ? &psi_ : nullptr;
  double critic_sum = 0.0;
  int critic_n = 0;
  for (int u = 0; u < updates; ++u) {
    if (replay_.size() < static_cast<std::size_t>(cfg_.high.batch_size)) break;
    const auto st = agent::train_high_level(hl_, psi, replay_, train_rng_);
    check_finite(st.critic_loss, "high-level critic loss");
    check_finite(st.actor_loss, "high-level actor loss");
    critic_sum += st.critic_loss;
    ++critic_n;
    if (st.actor_updated && cfg_.adj_loss_updates_psi && psi != nullptr) {
      // Ablation: push the actor's adjacency term into psi as well.
      const auto idx = replay_.sample_indices(static_cast<std::size_t>(cfg_.high.batch_size), train_rng_);
      nn::Matrix pos(2, static_cast<Eigen::Index>(idx.size())), goals(2, static_cast<Eigen::Index>(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& tr = replay_.at(idx[i]);
        const Subgoal g = geom_.clamp(agent::to_absolute(hl_.offset(tr.s), tr.s));
        pos.col(static_cast<Eigen::Index>(i)) << tr.s.x, tr.s.y;
        goals.col(static_cast<Eigen::Index>(i)) << g.gx, g.gy;
      }
      auto g = embed::adjacency_loss_param_grads(psi_, pos, goals);
      g *= cfg_.eta;
      nn::adam_step(psi_.net, g, psi_opt_);
    }
  }

  rec.env_steps = env_steps_;
  rec.adjacency_loss_mean = rec.subgoals ? adj_sum / rec.subgoals : 0.0;
  rec.adjacent_fraction = rec.subgoals ? double(adjacent) / rec.subgoals : 0.0;
  rec.hl_critic_loss = critic_n ? critic_sum / critic_n : 0.0;
  rec.ll_entropy = ll_updates ? entropy_sum / ll_updates : 0.0;
  ++episodes_;
  return rec;
}

EvalResult Trainer::evaluate(int episodes, std::uint64_t tag,
                             std::vector<std::pair<GridState, Subgoal>>* emitted) {
  Rng rng = stream(cfg_.seed ^ (tag * 0x9E3779B97F4A7C15ull), kEval);
  return evaluate_policy(env_, hl_, ll_, &psi_, cfg_.k, episodes, rng, emitted);
}

void Trainer::write_summary(const RunSummary& s) {
  nlohmann::ordered_json j{{"format", "hrac-summary"},
                           {"version", 1},
                           {"env_steps", s.env_steps},
                           {"episodes", s.episodes},
                           {"final_eval_reward", s.final_eval_reward},
                           {"final_eval_success", s.final_eval_success},
                           {"eval_adjacent_fraction", s.eval_adjacent_fraction},
                           {"train_adjacent_fraction", s.train_adjacent_fraction},
                           {"policy_forwards_before_pretrain", s.policy_forwards_before_pretrain},
                           {"config", to_json(cfg_)}};
  std::ofstream(dir_ / "summary.json") << j.dump(2) << '\n';
}

RunSummary Trainer::run() {
  open_outputs();
  RunSummary summary;
  summary.dir = dir_;

  auto t0 = Clock::now();
  warmup();
  timer_.add("warmup", Clock::now() - t0);
  t0 = Clock::now();
  summary.policy_forwards_before_pretrain = policy_forwards_;
  adjacency_round(true);
  timer_.add("adjacency", Clock::now() - t0);

  while (env_steps_ < cfg_.total_steps && (cfg_.total_episodes <= 0 || episodes_ < cfg_.total_episodes)) {
    t0 = Clock::now();
    const MetricsRecord rec = episode();
    timer_.add("episodes", Clock::now() - t0);

    const bool step_trigger = cfg_.finetune_every_steps > 0 && steps_since_round_ >= cfg_.finetune_every_steps;
    const bool episode_trigger = cfg_.finetune_every_episodes > 0 && episodes_ % cfg_.finetune_every_episodes == 0;
    if (step_trigger || episode_trigger) {
      t0 = Clock::now();
      adjacency_round(false);
      timer_.add("adjacency", Clock::now() - t0);
    }

    MetricsRecord out = rec;
    out.distill_loss = last_distill_loss_;
    out.matrix_updates = matrix_updates_;
    out.distill_rounds = distill_rounds_;
    out.buffer_trajectories = buffer_.size();
    metrics_ << out.episode << ',' << out.env_steps << ',' << fmt(out.episode_reward) << ',' << int(out.success) << ','
             << out.length << ',' << out.subgoals << ',' << fmt(out.adjacency_loss_mean) << ','
             << fmt(out.adjacent_fraction) << ',' << fmt(out.distill_loss) << ',' << fmt(out.hl_critic_loss) << ','
             << fmt(out.ll_entropy) << ',' << out.matrix_updates << ',' << out.distill_rounds << ','
             << out.buffer_trajectories << '\n';

    if (cfg_.eval_every_episodes > 0 && episodes_ % cfg_.eval_every_episodes == 0) {
      t0 = Clock::now();
      const auto ev = evaluate(cfg_.eval_episodes, static_cast<std::uint64_t>(episodes_), nullptr);
      eval_out_ << episodes_ << ',' << env_steps_ << ',' << fmt(ev.mean_reward) << ',' << fmt(ev.success_rate) << ','
                << fmt(ev.mean_length) << ','
                << fmt(ev.subgoals ? double(ev.adjacent_subgoals) / ev.subgoals : 0.0) << '\n';
      timer_.add("evaluation", Clock::now() - t0);
    }
  }

  // Final evaluation: the greedy policy's subgoals, judged by the final psi.
  t0 = Clock::now();
  std::vector<std::pair<GridState, Subgoal>> emitted;
  const auto final_eval = evaluate(std::max(cfg_.eval_episodes, 1), 0xF1A1ull, &emitted);
  summary.final_eval_reward = final_eval.mean_reward;
  summary.final_eval_success = final_eval.success_rate;
  summary.eval_adjacent_fraction =
      final_eval.subgoals ? double(final_eval.adjacent_subgoals) / final_eval.subgoals : 0.0;
  std::size_t adj_recent = 0;
  for (const auto& [st, g] : recent_emissions_) adj_recent += embed::adjacency_loss(psi_, st, g).value == 0.0;
  summary.train_adjacent_fraction =
      recent_emissions_.empty() ? 0.0 : double(adj_recent) / double(recent_emissions_.size());
  timer_.add("evaluation", Clock::now() - t0);
  summary.env_steps = env_steps_;
  summary.episodes = episodes_;

  const fs::path ckpt = dir_ / "checkpoint";
  agent::save_checkpoint(hl_, ll_, ckpt);
  embed::save_checkpoint(psi_, ckpt / "psi.bin");
  std::ofstream(ckpt / "config.txt") << to_text(cfg_);
  if (uses_matrix()) matrix_.export_snapshot(dir_ / "adjacency");
  write_summary(summary);

  std::ofstream timing(dir_ / "timing.csv");
  timing << "phase,seconds\n";
  for (const auto& name : timer_.order) timing << name << ',' << fmt(timer_.seconds[name]) << '\n';
  return summary;
}

std::string eta_dir_name(double eta) { return "eta_" + fmt(eta); }

}  // namespace

std::vector<RunSummary> run(RunConfig cfg, const fs::path& out_dir) {
  cfg.resolve();
  if (cfg.variant != Variant::EtaSweep) return {Trainer(cfg, out_dir).run()};
  std::vector<RunSummary> out;
  for (double eta : cfg.eta_sweep) {
    RunConfig one = cfg;
    one.eta = eta;
    one.resolve();
    out.push_back(Trainer(one, out_dir / eta_dir_name(eta)).run());
  }
  return out;
}

std::vector<RunSummary> run_many(const std::vector<RunConfig>& cfgs, const std::vector<fs::path>& dirs) {
  if (cfgs.size() != dirs.size()) throw std::invalid_argument("run_many: one directory per config");
  std::vector<std::vector<RunSummary>> parts(cfgs.size());
  std::vector<std::string> errors(cfgs.size());
  const auto n = static_cast<int>(cfgs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    try {
      parts[i] = run(cfgs[i], dirs[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  std::vector<RunSummary> out;
  for (int i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw std::runtime_error(dirs[i].string() + ": " + errors[i]);
    out.insert(out.end(), parts[i].begin(), parts[i].end());
  }
  return out;
}

std::vector<RunSummary> run_many_reference(const std::vector<RunConfig>& cfgs, const std::vector<fs::path>& dirs) {
  if (cfgs.size() != dirs.size()) throw std::invalid_argument("run_many: one directory per config");
  std::vector<RunSummary> out;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    auto r = run(cfgs[i], dirs[i]);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

std::size_t Table::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::invalid_argument("no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

Table read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (t.header.is_null()) t.header = nlohmann::ordered_json::parse(line.substr(1));
      continue;
    }
    std::stringstream ss(line);
    std::vector<std::string> cells;
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (t.columns.empty()) {
      t.columns = cells;
      continue;
    }
    if (cells.size() != t.columns.size()) throw std::runtime_error(path.string() + ": ragged row");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(std::strtod(c.c_str(), nullptr));
    t.rows.push_back(std::move(row));
  }
  if (t.columns.empty()) throw std::runtime_error(path.string() + ": no column row");
  return t;
}

namespace {

nlohmann::ordered_json config_without_seed(const Table& t) {
  if (!t.header.is_object() || !t.header.contains("config")) return {};
  auto c = t.header["config"];
  c.erase("seed");
  return c;
}

}  // namespace

Curve aggregate(const std::vector<Table>& runs, const AggregateOptions& opts) {
  if (runs.size() < 2) throw std::invalid_argument("aggregate needs at least 2 runs");
  if (opts.bin_width <= 0.0) throw std::invalid_argument("bin width must be positive");
  if (opts.smoothing < 1) throw std::invalid_argument("smoothing window must be >= 1");
  const auto ref = config_without_seed(runs[0]);
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (config_without_seed(runs[r]) != ref) {
      throw std::invalid_argument("aggregate: run " + std::to_string(r) + " has a different config");
    }
  }

  // Per run: bin means, carried forward, then trailing moving average.
  std::size_t bins = 0;
  std::vector<std::vector<std::optional<double>>> per_run;
  for (const auto& t : runs) {
    const auto xi = t.column(opts.x), yi = t.column(opts.y);
    std::vector<double> sum, cnt;
    for (const auto& row : t.rows) {
      if (row[xi] < 0.0) throw std::invalid_argument("aggregate: negative x");
      const auto b = static_cast<std::size_t>(row[xi] / opts.bin_width);
      if (b >= sum.size()) {
        sum.resize(b + 1, 0.0);
        cnt.resize(b + 1, 0.0);
      }
      sum[b] += row[yi];
      cnt[b] += 1.0;
    }
    std::vector<std::optional<double>> v(sum.size());
    std::optional<double> carry;
    for (std::size_t b = 0; b < sum.size(); ++b) {
      if (cnt[b] > 0) carry = sum[b] / cnt[b];
      v[b] = carry;
    }
    std::vector<std::optional<double>> smoothed(v.size());
    for (std::size_t b = 0; b < v.size(); ++b) {
      double acc = 0.0;
      int n = 0;
      for (std::size_t w = 0; w < static_cast<std::size_t>(opts.smoothing) && w <= b; ++w) {
        if (v[b - w]) {
          acc += *v[b - w];
          ++n;
        }
      }
      if (n) smoothed[b] = acc / n;
    }
    bins = std::max(bins, smoothed.size());
    per_run.push_back(std::move(smoothed));
  }

  Curve c;
  c.label = opts.label;
  c.x_name = opts.x;
  c.y_name = opts.y;
  c.bin_width = opts.bin_width;
  c.smoothing = opts.smoothing;
  for (std::size_t b = 0; b < bins; ++b) {
    std::vector<double> vals;
    for (const auto& r : per_run) {
      if (b < r.size() && r[b]) vals.push_back(*r[b]);
    }
    if (vals.empty()) continue;
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= double(vals.size());
    double sem = 0.0;
    if (vals.size() > 1) {
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      sem = std::sqrt(ss / double(vals.size() - 1)) / std::sqrt(double(vals.size()));
    }
    c.x.push_back((double(b) + 1.0) * opts.bin_width);
    c.mean.push_back(mean);
    c.sem.push_back(sem);
    c.n.push_back(static_cast<int>(vals.size()));
  }
  return c;
}

Curve aggregate(const std::vector<fs::path>& files, const AggregateOptions& opts) {
  std::vector<Table> runs;
  for (const auto& f : files) runs.push_back(read_table(f));
  return aggregate(runs, opts);
}

void write_curve(const Curve& c, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  nlohmann::ordered_json h{{"format", "hrac-curve"},  {"version", 1},         {"label", c.label},
                           {"x", c.x_name},           {"y", c.y_name},        {"bin_width", c.bin_width},
                           {"smoothing", c.smoothing}};
  out << "# " << h.dump() << "\n";
  out << "x,mean,sem,n\n";
  for (std::size_t i = 0; i < c.x.size(); ++i) {
    out << fmt(c.x[i]) << ',' << fmt(c.mean[i]) << ',' << fmt(c.sem[i]) << ',' << c.n[i] << '\n';
  }
}

Curve read_curve(const fs::path& path) {
  const Table t = read_table(path);
  Curve c;
  c.label = t.header.value("label", std::string{});
  c.x_name = t.header.value("x", std::string{"x"});
  c.y_name = t.header.value("y", std::string{"y"});
  c.bin_width = t.header.value("bin_width", 0.0);
  c.smoothing = t.header.value("smoothing", 1);
  const auto xi = t.column("x"), mi = t.column("mean"), si = t.column("sem"), ni = t.column("n");
  for (const auto& row : t.rows) {
    c.x.push_back(row[xi]);
    c.mean.push_back(row[mi]);
    c.sem.push_back(row[si]);
    c.n.push_back(static_cast<int>(row[ni]));
  }
  return c;
}

}  // namespace hrac::harness
