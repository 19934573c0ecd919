#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hrac/config.hpp"

namespace hrac::harness {

/// One row of metrics.csv.
struct MetricsRecord {
  std::int64_t episode = 0;
  std::int64_t env_steps = 0;  // cumulative, warm-up included
  double episode_reward = 0.0;
  bool success = false;
  int length = 0;
  int subgoals = 0;
  double adjacency_loss_mean = 0.0;  // over this episode's emitted subgoals, current psi
  double adjacent_fraction = 0.0;
  double distill_loss = 0.0;  // last epoch of the latest distillation round
  double hl_critic_loss = 0.0;
  double ll_entropy = 0.0;
  std::int64_t matrix_updates = 0;
  std::int64_t distill_rounds = 0;
  std::size_t buffer_trajectories = 0;  // after the episode (0 right after a clear)
};

struct RunSummary {
  std::filesystem::path dir;
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  double final_eval_reward = 0.0;
  double final_eval_success = 0.0;
  /// Fraction of subgoals with zero adjacency loss under the final psi.
  double eval_adjacent_fraction = 0.0;   // greedy emissions of the final policy
  double train_adjacent_fraction = 0.0;  // exploratory emissions over the last stretch of training
  std::int64_t policy_forwards_before_pretrain = 0;
};

/// Algorithm-1 training run. Writes into `out_dir`:
///   metrics.csv  per-episode rows, '#' JSON header with the resolved config
///   events.csv   warm-up, matrix update, distillation and buffer-clear events
///   eval.csv     greedy evaluation every eval_every_episodes episodes
///   timing.csv   wall-clock per phase (kept out of metrics.csv)
///   summary.json, checkpoint/ (agent, psi + sidecar, config.txt), adjacency.{pbm,json}
/// variant=eta_sweep runs once per eta into `out_dir/eta_<value>/`; the returned
/// vector holds one summary per run.
std::vector<RunSummary> run(RunConfig cfg, const std::filesystem::path& out_dir);

/// Independent runs, spread over OpenMP threads (one run per iteration).
std::vector<RunSummary> run_many(const std::vector<RunConfig>& cfgs, const std::vector<std::filesystem::path>& dirs);
/// Sequential reference for run_many.
std::vector<RunSummary> run_many_reference(const std::vector<RunConfig>& cfgs,
                                           const std::vector<std::filesystem::path>& dirs);

struct EvalResult {
  double mean_reward = 0.0;
  double success_rate = 0.0;
  double mean_length = 0.0;
  int subgoals = 0;
  int adjacent_subgoals = 0;  // under the psi passed in, if any
};

/// Greedy episodes: deterministic subgoals, argmax low-level actions. Environment
/// noise still applies. psi (optional) scores each emitted subgoal.
EvalResult evaluate_policy(const EnvConfig& env, const agent::HighLevelPolicy& hl, const agent::LowLevelPolicy& ll,
                           const embed::AdjacencyNet* psi, int k, int episodes, Rng& rng,
                           std::vector<std::pair<GridState, Subgoal>>* emitted = nullptr);
/// Loads `dir/config.txt`, the agent networks and psi.bin from a run's checkpoint directory.
EvalResult evaluate_checkpoint(const std::filesystem::path& dir, int episodes, std::uint64_t seed);

/// A parsed CSV table with its '#' header line decoded as JSON.
struct Table {
  nlohmann::ordered_json header;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;
};

Table read_table(const std::filesystem::path& path);

/// Mean and standard error across runs, per x bin.
struct Curve {
  std::string label;
  std::string x_name, y_name;
  double bin_width = 0.0;
  int smoothing = 1;
  std::vector<double> x, mean, sem;
  std::vector<int> n;
};

struct AggregateOptions {
  std::string x = "env_steps";
  std::string y = "episode_reward";
  double bin_width = 10000.0;
  /// Trailing moving average over this many bins, per run, before averaging.
  int smoothing = 1;
  std::string label;
};

/// Bins each run's y by x (bin mean, carried forward over empty bins), then
/// averages across runs. SEM uses the n-1 standard deviation. Throws if the
/// runs' configs differ in anything but the seed.
Curve aggregate(const std::vector<Table>& runs, const AggregateOptions& opts);
Curve aggregate(const std::vector<std::filesystem::path>& files, const AggregateOptions& opts);

void write_curve(const Curve& c, const std::filesystem::path& path);
Curve read_curve(const std::filesystem::path& path);

/// Raises glibc's mmap and trim thresholds so large network temporaries are
/// recycled from the heap. Process-wide; call once from main.
void tune_allocator();

/// Shortest round-trip decimal form used in every emitted file.
std::string fmt(double v);

}  // namespace hrac::harness
