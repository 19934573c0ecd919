#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "hrac/adjacency.hpp"
#include "hrac/gridworld.hpp"
#include "hrac/tinynn.hpp"

namespace hrac::embed {

/// Affine map of goal coordinates onto [-1, 1] using the grid extents.
struct GoalNormalizer {
  int width = 1;
  int height = 1;

  double scale_x() const { return width > 1 ? 2.0 / (width - 1) : 1.0; }
  double scale_y() const { return height > 1 ? 2.0 / (height - 1) : 1.0; }
  double x(double gx) const { return gx * scale_x() - 1.0; }
  double y(double gy) const { return gy * scale_y() - 1.0; }
};

struct AdjacencyNetConfig {
  int k = 10;
  double eps_k = 1.0;
  double delta = 0.2;
  std::vector<int> hidden{128, 128, 128};
  int embedding_dim = 32;
};

/// Goal -> embedding network. Embedding distance k/eps_k * ||psi(g1) - psi(g2)||
/// approximates the shortest transition distance around the threshold k.
struct AdjacencyNet {
  nn::DenseNet net;
  GoalNormalizer normalizer;
  int k = 10;
  double eps_k = 1.0;
  double delta = 0.2;

  static AdjacencyNet create(const AdjacencyNetConfig& cfg, GoalNormalizer normalizer, Rng& rng);

  /// 2 x B raw goal coordinates -> normalized network input.
  nn::Matrix normalize(const nn::Matrix& goals) const;
  nn::Vector embed(const Subgoal& g) const;
  nn::Matrix embed_batch(const nn::Matrix& goals) const;
};

double hinge(double x, int k);

double approx_distance(const AdjacencyNet& psi, const Subgoal& a, const Subgoal& b);
/// Plain embedding-space distance ||psi(a) - psi(b)||.
double embedding_distance(const AdjacencyNet& psi, const Subgoal& a, const Subgoal& b);
/// Adjacent iff the embedding distance is within eps_k.
bool classify_adjacent(const AdjacencyNet& psi, const Subgoal& a, const Subgoal& b);

/// One pair's contribution given the embedding distance.
double contrastive_term(double distance, int label, double eps_k, double delta);

struct LossAndGrad {
  double loss = 0.0;
  nn::Gradients grads;
};

/// Batch mean of the two-sided hinge loss and its parameter gradient.
LossAndGrad contrastive_loss(const AdjacencyNet& psi, std::span<const adjacency::LabeledPair> batch);

struct DistillOptions {
  int epochs = 50;
  int batches_per_epoch = 100;
  int batch_size = 64;
  bool balanced = false;
  const adjacency::HoldoutSet* holdout = nullptr;
};

struct DistillStats {
  std::vector<double> epoch_loss;
  bool single_class = false;
};

using PairSampler = std::function<std::vector<adjacency::LabeledPair>(int n, Rng& rng)>;

/// Adam over sampled batches; `adam` carries optimizer moments across rounds.
DistillStats distill(AdjacencyNet& psi, nn::AdamState& adam, const adjacency::AdjacencyMatrix& m,
                     const DistillOptions& opts, Rng& rng);
DistillStats distill_with(AdjacencyNet& psi, nn::AdamState& adam, const PairSampler& sampler,
                          const DistillOptions& opts, Rng& rng);

struct AdjacencyLoss {
  double value = 0.0;
  Subgoal grad;  // d value / d g
};

/// max(||psi(phi(s)) - psi(g)|| - eps_k, 0) and its gradient with respect to g.
/// psi's parameters are read only.
AdjacencyLoss adjacency_loss(const AdjacencyNet& psi, const GridState& s, const Subgoal& g);

struct AdjacencyLossBatch {
  nn::Vector values;
  nn::Matrix grad_goals;  // 2 x B, per-sample gradients
};

/// Column-wise version: positions and goals are both 2 x B.
AdjacencyLossBatch adjacency_loss_batch(const AdjacencyNet& psi, const nn::Matrix& positions,
                                        const nn::Matrix& goals);
/// Gradient of the batch-mean adjacency loss with respect to psi's parameters
/// (both sides of each pair). Used only when psi is trained through the actor loss.
nn::Gradients adjacency_loss_param_grads(const AdjacencyNet& psi, const nn::Matrix& positions,
                                         const nn::Matrix& goals);

/// Embedding distances between every pair of cells; rows are split across OpenMP threads.
nn::Matrix pairwise_distances(const AdjacencyNet& psi, const std::vector<Cell>& cells);
/// Serial reference for pairwise_distances.
nn::Matrix pairwise_distances_reference(const AdjacencyNet& psi, const std::vector<Cell>& cells);

struct Accuracy {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
  double accuracy() const;
  double balanced_accuracy() const;
};

enum class PairSubset { All, Training, Holdout };

/// Thresholded embedding distance against matrix labels over unordered pairs i < j.
Accuracy evaluate(const AdjacencyNet& psi, const adjacency::AdjacencyMatrix& m, PairSubset subset = PairSubset::All,
                  const adjacency::HoldoutSet* holdout = nullptr);

/// Network blob plus `<path>.json` sidecar (eps_k, delta, k, normalization extents).
void save_checkpoint(const AdjacencyNet& psi, const std::filesystem::path& path);
AdjacencyNet load_checkpoint(const std::filesystem::path& path);

}  // namespace hrac::embed
