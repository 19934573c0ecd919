#include "hrac/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace hrac::harness {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Hrac: return "hrac";
    case Variant::HracOracle: return "hrac_o";
    case Variant::NoAdj: return "noadj";
    case Variant::NegReward: return "negreward";
    case Variant::EtaSweep: return "eta_sweep";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::Hrac, Variant::HracOracle, Variant::NoAdj, Variant::NegReward, Variant::EtaSweep}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    throw std::invalid_argument("config key '" + std::string(key) + "' expects a real number, got '" + v + "'");
  }
  return d;
}

template <class Int>
Int parse_int(std::string_view key, const std::string& v) {
  Int out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw std::invalid_argument("config key '" + std::string(key) + "' expects an integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config key '" + std::string(key) + "' expects true/false, got '" + v + "'");
}

template <class T>
std::vector<T> parse_list(std::string_view key, const std::string& v, T (*one)(std::string_view, const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(one(key, trim(item)));
  if (out.empty()) throw std::invalid_argument("config key '" + std::string(key) + "' expects a list");
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_floating_point_v<T>) s += fmt_double(xs[i]);
    else s += std::to_string(xs[i]);
  }
  return s;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define HRAC_DOUBLE(name, member)                                                           \
  Field {                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_double(name, v); },     \
        [](const RunConfig& c) { return fmt_double(c.member); }                             \
  }
#define HRAC_INT(name, member)                                                                          \
  Field {                                                                                               \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_int<decltype(c.member)>(name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                                     \
  }
#define HRAC_BOOL(name, member)                                                        \
  Field {                                                                              \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }    \
  }

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      Field{"env",
            [](RunConfig& c, const std::string& v) {
              if (v != "maze" && v != "keychest") throw std::invalid_argument("env must be maze or keychest");
              c.env = v;
            },
            [](const RunConfig& c) { return c.env; }},
      Field{"variant", [](RunConfig& c, const std::string& v) { c.variant = parse_variant(v); },
            [](const RunConfig& c) { return std::string(to_string(c.variant)); }},
      HRAC_DOUBLE("noise", noise),
      HRAC_INT("seed", seed),
      HRAC_INT("k", k),
      HRAC_DOUBLE("eta", eta),
      Field{"eta_sweep",
            [](RunConfig& c, const std::string& v) { c.eta_sweep = parse_list<double>("eta_sweep", v, parse_double); },
            [](const RunConfig& c) { return join(c.eta_sweep); }},
      HRAC_DOUBLE("sigma", sigma),
      HRAC_INT("replay_capacity", replay_capacity),
      HRAC_INT("total_steps", total_steps),
      HRAC_INT("total_episodes", total_episodes),
      HRAC_INT("warmup_steps", warmup_steps),
      HRAC_INT("pretrain_epochs", pretrain_epochs),
      HRAC_INT("finetune_every_steps", finetune_every_steps),
      HRAC_INT("finetune_every_episodes", finetune_every_episodes),
      HRAC_INT("finetune_epochs", finetune_epochs),
      HRAC_INT("adj_batches_per_epoch", adj_batches_per_epoch),
      HRAC_INT("adj_batch_size", adj_batch_size),
      HRAC_DOUBLE("adj_lr", adj_lr),
      HRAC_DOUBLE("eps_k", eps_k),
      HRAC_DOUBLE("delta", delta),
      HRAC_BOOL("balanced_pairs", balanced_pairs),
      HRAC_INT("noadj_multiplier", noadj_multiplier),
      HRAC_BOOL("adj_loss_updates_psi", adj_loss_updates_psi),
      Field{"hl_hidden",
            [](RunConfig& c, const std::string& v) { c.high.hidden = parse_list<int>("hl_hidden", v, parse_int<int>); },
            [](const RunConfig& c) { return join(c.high.hidden); }},
      HRAC_DOUBLE("hl_actor_lr", high.actor_lr),
      HRAC_DOUBLE("hl_critic_lr", high.critic_lr),
      HRAC_INT("hl_batch_size", high.batch_size),
      HRAC_DOUBLE("hl_tau", high.tau),
      HRAC_INT("hl_policy_freq", high.policy_freq),
      HRAC_DOUBLE("hl_gamma", high.gamma),
      HRAC_DOUBLE("hl_policy_noise", high.policy_noise),
      HRAC_DOUBLE("hl_noise_clip", high.noise_clip),
      HRAC_DOUBLE("hl_reward_scale", high.reward_scale),
      HRAC_INT("hl_updates_per_episode", hl_updates_per_episode),
      Field{"ll_hidden",
            [](RunConfig& c, const std::string& v) { c.low.hidden = parse_list<int>("ll_hidden", v, parse_int<int>); },
            [](const RunConfig& c) { return join(c.low.hidden); }},
      HRAC_DOUBLE("ll_actor_lr", low.actor_lr),
      HRAC_DOUBLE("ll_critic_lr", low.critic_lr),
      HRAC_DOUBLE("ll_entropy_weight", low.entropy_weight),
      HRAC_DOUBLE("ll_gamma", low.gamma),
      HRAC_INT("ll_n_steps", low.n_steps),
      HRAC_BOOL("ll_terminal_on_reach", low.terminal_on_reach),
      HRAC_BOOL("ll_dense_reward", low.dense_reward),
      HRAC_INT("eval_every_episodes", eval_every_episodes),
      HRAC_INT("eval_episodes", eval_episodes),
  };
  return fields;
}

#undef HRAC_DOUBLE
#undef HRAC_INT
#undef HRAC_BOOL

const Field& find_field(std::string_view key) {
  for (const auto& f : schema()) {
    if (key == f.key) return f;
  }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void RunConfig::resolve() {
  if (sigma < 0.0) sigma = env == "maze" ? 3.0 : 5.0;
  if (replay_capacity <= 0) replay_capacity = env == "maze" ? 10000 : 20000;
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (noise < 0.0 || noise > 1.0) throw std::invalid_argument("noise must lie in [0, 1]");
  if (eps_k <= 0.0 || delta <= 0.0) throw std::invalid_argument("eps_k and delta must be positive");
  if (high.policy_freq < 1 || high.batch_size < 1 || low.n_steps < 1) {
    throw std::invalid_argument("batch sizes, policy_freq and ll_n_steps must be positive");
  }
  if (adj_batch_size < 1 || adj_batches_per_epoch < 1) throw std::invalid_argument("adjacency batch settings must be positive");
  if (total_steps < 1) throw std::invalid_argument("total_steps must be positive");
  if (eval_every_episodes < 0 || eval_episodes < 0) throw std::invalid_argument("evaluation settings must be >= 0");
  high.sigma = sigma;
  high.eta = eta;
  high.buffer_capacity = static_cast<std::size_t>(replay_capacity);
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  find_field(trim(key)).set(cfg, trim(value));
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::istringstream in{std::string(text)};
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(base, t.substr(0, eq), t.substr(eq + 1));
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_text(const RunConfig& cfg) {
  std::string s;
  for (const auto& f : schema()) s += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return s;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& f : schema()) j[f.key] = f.get(cfg);
  return j;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : schema()) keys.emplace_back(f.key);
  return keys;
}

}  // namespace hrac::harness
