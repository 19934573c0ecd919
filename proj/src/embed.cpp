#include "hrac/embed.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <json.hpp>

namespace hrac::embed {

using nn::Matrix;
using nn::Vector;

AdjacencyNet AdjacencyNet::create(const AdjacencyNetConfig& cfg, GoalNormalizer normalizer, Rng& rng) {
  std::vector<int> sizes{2};
  std::vector<nn::Activation> acts;
  for (int h : cfg.hidden) {
    sizes.push_back(h);
    acts.push_back(nn::Activation::Relu);
  }
  sizes.push_back(cfg.embedding_dim);
  acts.push_back(nn::Activation::Identity);
  return {nn::DenseNet(sizes, acts, rng), normalizer, cfg.k, cfg.eps_k, cfg.delta};
}

Matrix AdjacencyNet::normalize(const Matrix& goals) const {
  Matrix x(2, goals.cols());
  for (Eigen::Index j = 0; j < goals.cols(); ++j) {
    x(0, j) = normalizer.x(goals(0, j));
    x(1, j) = normalizer.y(goals(1, j));
  }
  return x;
}

Vector AdjacencyNet::embed(const Subgoal& g) const {
  Vector x(2);
  x << normalizer.x(g.gx), normalizer.y(g.gy);
  return net.forward(x);
}

Matrix AdjacencyNet::embed_batch(const Matrix& goals) const { return net.forward(normalize(goals)); }

double hinge(double x, int k) {
  if (k < 1) throw std::invalid_argument("hinge requires k >= 1");
  return std::max(x / k - 1.0, 0.0);
}

double embedding_distance(const AdjacencyNet& psi, const Subgoal& a, const Subgoal& b) {
  return (psi.embed(a) - psi.embed(b)).norm();
}

double approx_distance(const AdjacencyNet& psi, const Subgoal& a, const Subgoal& b) {
  return psi.k / psi.eps_k * embedding_distance(psi, a, b);
}

bool classify_adjacent(const AdjacencyNet& psi, const Subgoal& a, const Subgoal& b) {
  return embedding_distance(psi, a, b) <= psi.eps_k;
}

double contrastive_term(double distance, int label, double eps_k, double delta) {
  return label == 1 ? std::max(distance - eps_k, 0.0) : std::max(eps_k + delta - distance, 0.0);
}

LossAndGrad contrastive_loss(const AdjacencyNet& psi, std::span<const adjacency::LabeledPair> batch) {
  if (batch.empty()) throw std::invalid_argument("contrastive_loss on an empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  Matrix goals(2, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = batch[static_cast<std::size_t>(i)];
    goals(0, i) = p.a.x;
    goals(1, i) = p.a.y;
    goals(0, n + i) = p.b.x;
    goals(1, n + i) = p.b.y;
  }
  nn::ForwardCache cache;
  const Matrix e = psi.net.forward(psi.normalize(goals), cache);
  Matrix upstream = Matrix::Zero(e.rows(), e.cols());
  LossAndGrad out{0.0, psi.net.zero_gradients()};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector diff = e.col(i) - e.col(n + i);
    const double dist = diff.norm();
    const int label = batch[static_cast<std::size_t>(i)].label;
    out.loss += contrastive_term(dist, label, psi.eps_k, psi.delta);
    if (dist <= 0.0) continue;
    double coef = 0.0;
    if (label == 1 && dist > psi.eps_k) coef = 1.0;
    if (label == 0 && dist < psi.eps_k + psi.delta) coef = -1.0;
    if (coef == 0.0) continue;
    const Vector g = coef / (dist * double(n)) * diff;
    upstream.col(i) = g;
    upstream.col(n + i) = -g;
  }
  out.loss /= double(n);
  psi.net.backward(cache, upstream, &out.grads);
  return out;
}

DistillStats distill_with(AdjacencyNet& psi, nn::AdamState& adam, const PairSampler& sampler,
                          const DistillOptions& opts, Rng& rng) {
  DistillStats stats;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    double sum = 0.0;
    for (int b = 0; b < opts.batches_per_epoch; ++b) {
      const auto batch = sampler(opts.batch_size, rng);
      auto lg = contrastive_loss(psi, batch);
      if (!std::isfinite(lg.loss) || !lg.grads.all_finite()) {
        throw std::runtime_error("non-finite contrastive loss during distillation");
      }
      nn::adam_step(psi.net, lg.grads, adam);
      sum += lg.loss;
    }
    stats.epoch_loss.push_back(sum / std::max(1, opts.batches_per_epoch));
  }
  return stats;
}

DistillStats distill(AdjacencyNet& psi, nn::AdamState& adam, const adjacency::AdjacencyMatrix& m,
                     const DistillOptions& opts, Rng& rng) {
  const std::size_t ones = m.count_ones();
  const std::size_t cells = static_cast<std::size_t>(m.size());
  const bool single_class = ones == cells * cells || ones == 0;
  if (single_class) {
    std::cerr << "warning: adjacency matrix has a single label class; distillation proceeds\n";
  }
  adjacency::SampleOptions so{opts.balanced, opts.holdout};
  auto stats = distill_with(
      psi, adam, [&](int n, Rng& r) { return adjacency::sample_pairs(m, n, r, so); }, opts, rng);
  stats.single_class = single_class;
  return stats;
}

AdjacencyLossBatch adjacency_loss_batch(const AdjacencyNet& psi, const Matrix& positions, const Matrix& goals) {
  const Eigen::Index n = goals.cols();
  Matrix both(2, 2 * n);
  both.leftCols(n) = positions;
  both.rightCols(n) = goals;
  nn::ForwardCache cache;
  const Matrix e = psi.net.forward(psi.normalize(both), cache);
  AdjacencyLossBatch out{Vector::Zero(n), Matrix::Zero(2, n)};
  Matrix upstream = Matrix::Zero(e.rows(), e.cols());
  bool any = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector diff = e.col(i) - e.col(n + i);
    const double dist = diff.norm();
    if (dist > psi.eps_k) {
      out.values(i) = dist - psi.eps_k;
      upstream.col(n + i) = -diff / dist;  // d dist / d e_goal
      any = true;
    }
  }
  if (any) {
    const Matrix dx = psi.net.backward(cache, upstream, nullptr);
    out.grad_goals.row(0) = dx.block(0, n, 1, n) * psi.normalizer.scale_x();
    out.grad_goals.row(1) = dx.block(1, n, 1, n) * psi.normalizer.scale_y();
  }
  return out;
}

nn::Gradients adjacency_loss_param_grads(const AdjacencyNet& psi, const Matrix& positions, const Matrix& goals) {
  const Eigen::Index n = goals.cols();
  Matrix both(2, 2 * n);
  both.leftCols(n) = positions;
  both.rightCols(n) = goals;
  nn::ForwardCache cache;
  const Matrix e = psi.net.forward(psi.normalize(both), cache);
  Matrix upstream = Matrix::Zero(e.rows(), e.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector diff = e.col(i) - e.col(n + i);
    const double dist = diff.norm();
    if (dist > psi.eps_k) {
      upstream.col(i) = diff / (dist * double(n));
      upstream.col(n + i) = -diff / (dist * double(n));
    }
  }
  auto grads = psi.net.zero_gradients();
  psi.net.backward(cache, upstream, &grads);
  return grads;
}

AdjacencyLoss adjacency_loss(const AdjacencyNet& psi, const GridState& s, const Subgoal& g) {
  Matrix pos(2, 1), goal(2, 1);
  pos << s.x, s.y;
  goal << g.gx, g.gy;
  const auto b = adjacency_loss_batch(psi, pos, goal);
  return {b.values(0), {b.grad_goals(0, 0), b.grad_goals(1, 0)}};
}

namespace {

Matrix cell_embeddings(const AdjacencyNet& psi, const std::vector<Cell>& cells) {
  Matrix goals(2, static_cast<Eigen::Index>(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    goals(0, static_cast<Eigen::Index>(i)) = cells[i].x;
    goals(1, static_cast<Eigen::Index>(i)) = cells[i].y;
  }
  return psi.embed_batch(goals);
}

}  // namespace

Matrix pairwise_distances(const AdjacencyNet& psi, const std::vector<Cell>& cells) {
  const Matrix e = cell_embeddings(psi, cells);
  const auto n = static_cast<int>(cells.size());
  Matrix d(n, n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) d(i, j) = (e.col(i) - e.col(j)).norm();
  }
  return d;
}

Matrix pairwise_distances_reference(const AdjacencyNet& psi, const std::vector<Cell>& cells) {
  const auto n = static_cast<int>(cells.size());
  Matrix d(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      d(i, j) = embedding_distance(psi, {double(cells[i].x), double(cells[i].y)},
                                   {double(cells[j].x), double(cells[j].y)});
    }
  }
  return d;
}

double Accuracy::accuracy() const {
  return total() ? double(tp + tn) / double(total()) : 0.0;
}

double Accuracy::balanced_accuracy() const {
  const double tpr = tp + fn ? double(tp) / double(tp + fn) : 1.0;
  const double tnr = tn + fp ? double(tn) / double(tn + fp) : 1.0;
  return 0.5 * (tpr + tnr);
}

Accuracy evaluate(const AdjacencyNet& psi, const adjacency::AdjacencyMatrix& m, PairSubset subset,
                  const adjacency::HoldoutSet* holdout) {
  const Matrix d = pairwise_distances(psi, m.cells());
  Accuracy acc;
  for (int i = 0; i < m.size(); ++i) {
    for (int j = i + 1; j < m.size(); ++j) {
      const bool held = holdout && holdout->contains(i, j);
      if (subset == PairSubset::Training && held) continue;
      if (subset == PairSubset::Holdout && !held) continue;
      const bool truth = m.get(i, j);
      const bool pred = d(i, j) <= psi.eps_k;
      if (truth && pred) ++acc.tp;
      else if (truth) ++acc.fn;
      else if (pred) ++acc.fp;
      else ++acc.tn;
    }
  }
  return acc;
}

void save_checkpoint(const AdjacencyNet& psi, const std::filesystem::path& path) {
  nn::save(psi.net, path);
  nlohmann::json j;
  j["format"] = "hrac-adjacency-net";
  j["version"] = 1;
  j["k"] = psi.k;
  j["eps_k"] = psi.eps_k;
  j["delta"] = psi.delta;
  j["normalization"] = {{"width", psi.normalizer.width}, {"height", psi.normalizer.height}};
  std::ofstream out(path.string() + ".json");
  if (!out) throw std::runtime_error("cannot write " + path.string() + ".json");
  out << j.dump(2) << '\n';
}

AdjacencyNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path.string() + ".json");
  if (!in) throw std::runtime_error("missing sidecar " + path.string() + ".json");
  const auto j = nlohmann::json::parse(in);
  AdjacencyNet psi;
  psi.net = nn::load(path);
  psi.k = j.at("k").get<int>();
  psi.eps_k = j.at("eps_k").get<double>();
  psi.delta = j.at("delta").get<double>();
  psi.normalizer.width = j.at("normalization").at("width").get<int>();
  psi.normalizer.height = j.at("normalization").at("height").get<int>();
  if (psi.net.input_size() != 2) throw std::runtime_error("adjacency checkpoint must take 2-d goals");
  return psi;
}

}  // namespace hrac::embed
