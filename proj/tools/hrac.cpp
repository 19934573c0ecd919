// Command-line front end: training runs, evaluation, oracle checks, psi
// evaluation, curve aggregation and plotting.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hrac/adjacency.hpp"
#include "hrac/config.hpp"
#include "hrac/embed.hpp"
#include "hrac/harness.hpp"
#include "hrac/oracle.hpp"
#include "hrac/report.hpp"

namespace fs = std::filesystem;
using namespace hrac;

namespace {

adjacency::AdjacencyMatrix oracle_matrix(const Layout& layout, int k) {
  const auto graph = grid_graph(layout);
  const auto d = oracle::shortest_transition_distance(graph.mdp);
  return adjacency::from_dense(k, graph.cells, oracle::perfect_adjacency_matrix(d, k, true));
}

nlohmann::ordered_json accuracy_json(const embed::Accuracy& a) {
  return {{"accuracy", a.accuracy()}, {"balanced_accuracy", a.balanced_accuracy()}, {"tp", a.tp},
          {"tn", a.tn},             {"fp", a.fp},                               {"fn", a.fn}};
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  harness::tune_allocator();
  CLI::App app{"hierarchical RL with k-step adjacency constraints"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run one training job (or an eta sweep)");
  std::string config_path, out_dir, env_name;
  std::uint64_t seed = 0;
  bool print_config = false;
  std::vector<std::string> overrides;
  double noise = -1.0;
  train->add_option("--config", config_path, "key = value config file");
  train->add_option("--seed", seed, "random seed");
  train->add_option("--env", env_name, "maze or keychest (overrides the file)");
  train->add_option("--noise", noise, "random-action probability (overrides the file)");
  train->add_option("--set", overrides, "extra key=value overrides")->take_all();
  train->add_option("--out", out_dir, "output directory (default runs/<env>_<variant>_s<seed>)");
  train->add_flag("--print-config", print_config, "print the resolved config and exit");

  // eval
  auto* eval = app.add_subcommand("eval", "greedy episodes from a checkpoint directory");
  std::string checkpoint;
  int episodes = 10;
  eval->add_option("--checkpoint", checkpoint, "run/checkpoint directory")->required();
  eval->add_option("--episodes", episodes, "episodes");
  eval->add_option("--seed", seed, "evaluation seed");

  // oracle-check
  auto* ocheck = app.add_subcommand("oracle-check", "theorem checks on random deterministic MDPs");
  oracle::SuiteOptions suite;
  ocheck->add_option("--fixtures", suite.fixtures, "number of random MDPs");
  ocheck->add_option("--k", suite.theorem1_k, "k values for the surrogate check")->delimiter(',');
  ocheck->add_option("--k2", suite.theorem2_k, "k values for the value check")->delimiter(',');
  ocheck->add_option("--horizons", suite.horizons, "horizons T for the value check")->delimiter(',');
  ocheck->add_option("--max-states", suite.max_states, "largest MDP");
  ocheck->add_option("--seed", suite.seed, "fixture seed");

  // embed-train
  auto* etrain = app.add_subcommand("embed-train", "train psi on an environment's oracle matrix");
  std::string psi_out = "psi.bin";
  int epochs = 50, batches = 0, k = 10;
  double holdout_fraction = 0.1;
  etrain->add_option("--env", env_name, "maze or keychest")->required();
  etrain->add_option("--epochs", epochs, "epochs");
  etrain->add_option("--batches-per-epoch", batches, "batches per epoch (0 = pairs / batch size)");
  etrain->add_option("--k", k, "adjacency threshold");
  etrain->add_option("--holdout", holdout_fraction, "fraction of pairs held out");
  etrain->add_option("--seed", seed, "seed");
  etrain->add_option("--out", psi_out, "checkpoint path");

  // embed-eval
  auto* eeval = app.add_subcommand("embed-eval", "psi accuracy against the oracle matrix");
  std::string psi_path, svg_out;
  eeval->add_option("--checkpoint", psi_path, "psi checkpoint (with .json sidecar)")->required();
  eeval->add_option("--env", env_name, "maze or keychest")->required();
  eeval->add_option("--svg", svg_out, "write a heat map of psi's predictions");

  // aggregate
  auto* agg = app.add_subcommand("aggregate", "mean and SEM across runs per x bin");
  harness::AggregateOptions agg_opts;
  std::vector<std::string> inputs;
  std::string agg_out;
  agg->add_option("files", inputs, "metrics.csv or eval.csv files")->required();
  agg->add_option("--x", agg_opts.x, "x column");
  agg->add_option("--y", agg_opts.y, "y column");
  agg->add_option("--bin", agg_opts.bin_width, "bin width");
  agg->add_option("--smooth", agg_opts.smoothing, "trailing moving average, in bins");
  agg->add_option("--label", agg_opts.label, "legend label");
  agg->add_option("--out", agg_out, "curve csv")->required();

  // plot
  auto* plot = app.add_subcommand("plot", "SVG chart from curve summaries");
  std::vector<std::string> curves_in;
  std::string plot_out;
  report::PlotOptions plot_opts;
  plot->add_option("curves", curves_in, "curve csv files")->required();
  plot->add_option("--out", plot_out, "svg path")->required();
  plot->add_option("--title", plot_opts.title, "title");
  plot->add_option("--x-label", plot_opts.x_label, "x axis label");
  plot->add_option("--y-label", plot_opts.y_label, "y axis label");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      harness::RunConfig cfg = config_path.empty() ? harness::RunConfig{} : harness::load_config(config_path);
      if (train->count("--seed")) cfg.seed = seed;
      if (!env_name.empty()) harness::set_config_value(cfg, "env", env_name);
      if (noise >= 0.0) cfg.noise = noise;
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + kv);
        harness::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      cfg.resolve();
      if (print_config) {
        std::cout << harness::to_text(cfg);
        return 0;
      }
      if (out_dir.empty()) {
        out_dir = "runs/" + cfg.env + "_" + std::string(harness::to_string(cfg.variant)) + "_s" + std::to_string(cfg.seed);
      }
      const auto summaries = harness::run(cfg, out_dir);
      for (const auto& s : summaries) {
        std::cout << s.dir.string() << ": episodes=" << s.episodes << " steps=" << s.env_steps
                  << " eval_reward=" << harness::fmt(s.final_eval_reward)
                  << " eval_success=" << harness::fmt(s.final_eval_success)
                  << " adjacent=" << harness::fmt(s.eval_adjacent_fraction) << '\n';
      }
    } else if (*eval) {
      const auto r = harness::evaluate_checkpoint(checkpoint, episodes, seed);
      nlohmann::ordered_json j{{"episodes", episodes},
                               {"mean_reward", r.mean_reward},
                               {"success_rate", r.success_rate},
                               {"mean_length", r.mean_length},
                               {"subgoals", r.subgoals},
                               {"adjacent_subgoals", r.adjacent_subgoals}};
      std::cout << j.dump(2) << '\n';
    } else if (*ocheck) {
      const auto rep = oracle::run_suite(suite);
      nlohmann::ordered_json j{{"fixtures", rep.fixtures},
                               {"triangle", {{"checks", rep.triangle_checks}, {"failures", rep.triangle_failures}}},
                               {"theorem1", {{"checks", rep.theorem1_checks}, {"failures", rep.theorem1_failures}}},
                               {"theorem2", {{"checks", rep.theorem2_checks}, {"failures", rep.theorem2_failures}}},
                               {"failures", rep.failures},
                               {"ok", rep.ok()}};
      std::cout << j.dump(2) << '\n';
      return rep.ok() ? 0 : 1;
    } else if (*etrain) {
      const auto env = make_env_config(env_name, 0.0);
      const auto m = oracle_matrix(env.layout, k);
      Rng rng(seed);
      embed::AdjacencyNetConfig ac;
      ac.k = k;
      auto psi = embed::AdjacencyNet::create(ac, {env.layout.width(), env.layout.height()}, rng);
      nn::AdamState adam(psi.net, {2e-4});
      const auto holdout = adjacency::make_holdout(m, holdout_fraction, rng);
      embed::DistillOptions opts;
      opts.epochs = epochs;
      const long pairs = long(m.size()) * (m.size() - 1) / 2;
      opts.batches_per_epoch = batches > 0 ? batches : int(std::max(1L, pairs / opts.batch_size));
      opts.holdout = &holdout;
      const auto stats = embed::distill(psi, adam, m, opts, rng);
      embed::save_checkpoint(psi, psi_out);
      nlohmann::ordered_json j{
          {"cells", m.size()},
          {"final_loss", stats.epoch_loss.empty() ? 0.0 : stats.epoch_loss.back()},
          {"training", accuracy_json(embed::evaluate(psi, m, embed::PairSubset::Training, &holdout))},
          {"holdout", accuracy_json(embed::evaluate(psi, m, embed::PairSubset::Holdout, &holdout))}};
      std::cout << j.dump(2) << '\n';
    } else if (*eeval) {
      const auto psi = embed::load_checkpoint(psi_path);
      const auto env = make_env_config(env_name, 0.0);
      const auto m = oracle_matrix(env.layout, psi.k);
      std::cout << nlohmann::ordered_json{{"cells", m.size()}, {"all", accuracy_json(embed::evaluate(psi, m))}}.dump(2)
                << '\n';
      if (!svg_out.empty()) {
        const auto d = embed::pairwise_distances(psi, m.cells());
        const int n = m.size();
        std::vector<std::uint8_t> pred(static_cast<std::size_t>(n) * n);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) pred[static_cast<std::size_t>(i) * n + j] = d(i, j) <= psi.eps_k;
        }
        write_file(svg_out, report::heatmap_svg(pred, n, "predicted adjacency, " + env_name));
      }
    } else if (*agg) {
      std::vector<fs::path> files(inputs.begin(), inputs.end());
      harness::write_curve(harness::aggregate(files, agg_opts), agg_out);
    } else if (*plot) {
      std::vector<harness::Curve> curves;
      for (const auto& f : curves_in) curves.push_back(harness::read_curve(f));
      write_file(plot_out, report::plot_svg(curves, plot_opts));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
