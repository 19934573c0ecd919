#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hrac/agent.hpp"

namespace hrac::harness {

enum class Variant { Hrac, HracOracle, NoAdj, NegReward, EtaSweep };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

/// Every knob of a training run. Text form is one `key = value` per line;
/// '#' starts a comment. Keys not in the schema are rejected.
struct RunConfig {
  std::string env = "keychest";
  Variant variant = Variant::Hrac;
  double noise = 0.25;
  std::uint64_t seed = 0;

  int k = 10;
  double eta = 20.0;
  std::vector<double> eta_sweep{1.0, 5.0, 10.0, 20.0};
  /// Gaussian exploration; a negative value resolves to 3.0 (maze) / 5.0 (keychest).
  double sigma = -1.0;
  /// Replay capacity; 0 resolves to 10000 (maze) / 20000 (keychest).
  std::int64_t replay_capacity = 0;

  std::int64_t total_steps = 500000;  // includes the warm-up
  std::int64_t total_episodes = 0;    // 0 = bounded by total_steps only

  std::int64_t warmup_steps = 50000;
  int pretrain_epochs = 50;
  std::int64_t finetune_every_steps = 50000;
  std::int64_t finetune_every_episodes = 0;  // 0 disables the episode trigger
  int finetune_epochs = 25;
  int adj_batches_per_epoch = 100;
  int adj_batch_size = 64;
  double adj_lr = 2e-4;
  double eps_k = 1.0;
  double delta = 0.2;
  bool balanced_pairs = false;
  int noadj_multiplier = 4;
  /// Let the actor's adjacency-loss gradient also update psi.
  bool adj_loss_updates_psi = false;

  agent::HighLevelConfig high;
  agent::LowLevelConfig low;
  /// High-level TD3 iterations after each episode; 0 = one per new transition.
  int hl_updates_per_episode = 0;

  int eval_every_episodes = 25;
  int eval_episodes = 10;

  /// Fills env-dependent defaults (sigma, replay capacity) and copies shared
  /// values into the agent configs. Throws on invalid settings.
  void resolve();
};

RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});
/// Applies a single `key=value` override.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
/// Canonical text form (every key, schema order). Round-trips through parse_config.
std::string to_text(const RunConfig& cfg);
nlohmann::ordered_json to_json(const RunConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace hrac::harness
