#include "hrac/adjacency.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace hrac::adjacency {

void TrajectoryBuffer::add(Trajectory t) {
  if (t.states.empty()) throw std::invalid_argument("trajectory must be non-empty");
  trajectories_.push_back(std::move(t));
}

std::size_t TrajectoryBuffer::total_states() const {
  std::size_t n = 0;
  for (const auto& t : trajectories_) n += t.states.size();
  return n;
}

AdjacencyMatrix::AdjacencyMatrix(int k) : k_(k) {
  if (k < 1) throw std::invalid_argument("adjacency matrix requires k >= 1");
}

int AdjacencyMatrix::add_cell(Cell c) {
  if (auto it = index_.find(c); it != index_.end()) return it->second;
  const int id = size();
  index_.emplace(c, id);
  cells_.push_back(c);
  for (auto& row : rows_) row.push_back(0);
  rows_.emplace_back(cells_.size(), 0);
  rows_[id][id] = 1;
  return id;
}

std::optional<int> AdjacencyMatrix::index_of(Cell c) const {
  if (auto it = index_.find(c); it != index_.end()) return it->second;
  return std::nullopt;
}

bool AdjacencyMatrix::adjacent(Cell a, Cell b) const {
  const auto i = index_of(a), j = index_of(b);
  return i && j && get(*i, *j);
}

void AdjacencyMatrix::set(int i, int j) {
  rows_[i][j] = 1;
  rows_[j][i] = 1;
}

void AdjacencyMatrix::update(const Trajectory& trajectory) {
  std::vector<int> ids;
  ids.reserve(trajectory.states.size());
  for (const Cell& c : trajectory.states) ids.push_back(add_cell(c));
  const int n = static_cast<int>(ids.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n && j - i <= k_; ++j) set(ids[i], ids[j]);
  }
}

void AdjacencyMatrix::update(const TrajectoryBuffer& buffer) {
  for (const auto& t : buffer.trajectories()) update(t);
}

std::size_t AdjacencyMatrix::count_ones() const {
  std::size_t n = 0;
  for (const auto& row : rows_) {
    for (auto v : row) n += v;
  }
  return n;
}

void AdjacencyMatrix::export_snapshot(const std::filesystem::path& stem) const {
  const int n = size();
  {
    std::ofstream out(stem.string() + ".pbm");
    if (!out) throw std::runtime_error("cannot write " + stem.string() + ".pbm");
    out << "P1\n" << n << ' ' << n << '\n';
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) out << (j ? " " : "") << int(rows_[i][j]);
      out << '\n';
    }
  }
  nlohmann::json j;
  j["k"] = k_;
  j["size"] = n;
  auto& cells = j["cells"] = nlohmann::json::array();
  for (const Cell& c : cells_) cells.push_back({c.x, c.y});
  std::ofstream out(stem.string() + ".json");
  if (!out) throw std::runtime_error("cannot write " + stem.string() + ".json");
  out << j.dump(2) << '\n';
}

AdjacencyMatrix from_dense(int k, const std::vector<Cell>& cells, const std::vector<std::uint8_t>& dense) {
  const int n = static_cast<int>(cells.size());
  if (dense.size() != static_cast<std::size_t>(n) * n) throw std::invalid_argument("dense matrix shape mismatch");
  AdjacencyMatrix m(k);
  for (const Cell& c : cells) m.add_cell(c);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (dense[static_cast<std::size_t>(i) * n + j]) m.set(i, j);
    }
  }
  return m;
}

HoldoutSet make_holdout(const AdjacencyMatrix& m, double fraction, Rng& rng) {
  HoldoutSet h;
  std::bernoulli_distribution keep(fraction);
  for (int i = 0; i < m.size(); ++i) {
    for (int j = i + 1; j < m.size(); ++j) {
      if (keep(rng)) h.pairs.insert({i, j});
    }
  }
  return h;
}

std::vector<LabeledPair> sample_pairs(const AdjacencyMatrix& m, int n, Rng& rng, SampleOptions opts) {
  if (m.size() < 2) throw std::invalid_argument("sample_pairs needs at least two explored cells");
  std::uniform_int_distribution<int> pick(0, m.size() - 1);
  std::bernoulli_distribution want_positive(0.5);
  const auto& cells = m.cells();
  std::vector<LabeledPair> out;
  out.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(out.size()) < n) {
    const int target = opts.balanced ? int(want_positive(rng)) : -1;
    // Bounded rejection: matrices with a single class fall back to any label.
    for (int attempt = 0;; ++attempt) {
      const int i = pick(rng), j = pick(rng);
      if (opts.exclude && opts.exclude->contains(i, j)) continue;
      const int label = m.get(i, j) ? 1 : 0;
      if (target >= 0 && label != target && attempt < 10000) continue;
      out.push_back({cells[i], cells[j], label});
      break;
    }
  }
  return out;
}

std::optional<int> noadj_label(int gap, int k, int multiplier) {
  if (gap <= k) return 1;
  if (gap >= multiplier * k) return 0;
  return std::nullopt;
}

std::vector<LabeledPair> sample_pairs_noadj(const TrajectoryBuffer& buffer, int n, int k, int multiplier,
                                            Rng& rng) {
  if (buffer.empty()) throw std::invalid_argument("sample_pairs_noadj needs a non-empty buffer");
  // Trajectories weighted by length so every stored state is equally likely.
  std::vector<double> weights;
  for (const auto& t : buffer.trajectories()) weights.push_back(double(t.states.size()));
  std::discrete_distribution<std::size_t> pick_traj(weights.begin(), weights.end());

  std::vector<LabeledPair> out;
  out.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(out.size()) < n) {
    const auto& t = buffer.trajectories()[pick_traj(rng)];
    std::uniform_int_distribution<int> pick(0, static_cast<int>(t.states.size()) - 1);
    const int i = pick(rng), j = pick(rng);
    if (auto label = noadj_label(std::abs(i - j), k, multiplier)) {
      out.push_back({t.states[i], t.states[j], *label});
    }
  }
  return out;
}

}  // namespace hrac::adjacency
