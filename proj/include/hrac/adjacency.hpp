#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hrac/gridworld.hpp"

namespace hrac::adjacency {

/// Goal-space cells visited in one episode, in order.
struct Trajectory {
  std::vector<Cell> states;
  int episode = 0;
};

/// Trajectories gathered between two matrix updates.
class TrajectoryBuffer {
 public:
  void add(Trajectory t);
  void clear() { trajectories_.clear(); }
  bool empty() const { return trajectories_.empty(); }
  std::size_t size() const { return trajectories_.size(); }
  std::size_t total_states() const;
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }

 private:
  std::vector<Trajectory> trajectories_;
};

struct LabeledPair {
  Cell a;
  Cell b;
  int label = 0;  // 1 = k-step adjacent
};

/// Growable binary k-step adjacency matrix over explored goal cells.
/// Rows are appended in discovery order; entries only ever flip 0 -> 1.
class AdjacencyMatrix {
 public:
  explicit AdjacencyMatrix(int k);

  int k() const { return k_; }
  int size() const { return static_cast<int>(cells_.size()); }
  const std::vector<Cell>& cells() const { return cells_; }

  /// Row id of a cell, registering a fresh zero row/column if it is new.
  int add_cell(Cell c);
  std::optional<int> index_of(Cell c) const;

  bool get(int i, int j) const { return rows_[i][j] != 0; }
  bool adjacent(Cell a, Cell b) const;
  void set(int i, int j);

  /// Labels every within-trajectory pair with temporal gap <= k, both directions.
  void update(const TrajectoryBuffer& buffer);
  void update(const Trajectory& trajectory);

  std::size_t count_ones() const;

  /// Writes `<stem>.pbm` (plain P1 bitmap) and `<stem>.json` (cell index).
  void export_snapshot(const std::filesystem::path& stem) const;

 private:
  int k_;
  std::vector<Cell> cells_;
  std::map<Cell, int> index_;
  std::vector<std::vector<std::uint8_t>> rows_;
};

/// Builds a matrix over all given cells from a dense 0/1 table in the same order.
AdjacencyMatrix from_dense(int k, const std::vector<Cell>& cells, const std::vector<std::uint8_t>& dense);

/// Unordered pair of row ids, (min, max).
using PairKey = std::pair<int, int>;

/// Pairs reserved for evaluation and never emitted by sample_pairs.
struct HoldoutSet {
  std::set<PairKey> pairs;
  bool contains(int i, int j) const { return pairs.count({std::min(i, j), std::max(i, j)}) != 0; }
};

/// Seeded split reserving `fraction` of distinct unordered cell pairs.
HoldoutSet make_holdout(const AdjacencyMatrix& m, double fraction, Rng& rng);

struct SampleOptions {
  /// Rejection-sample so that each pair is positive with probability 1/2.
  bool balanced = false;
  const HoldoutSet* exclude = nullptr;
};

/// Cells drawn uniformly with replacement from the explored set, labeled from m.
/// Throws std::invalid_argument when m has fewer than two cells.
std::vector<LabeledPair> sample_pairs(const AdjacencyMatrix& m, int n, Rng& rng, SampleOptions opts = {});

/// Label for a temporal gap under the trajectory-pair scheme: 1 for gap <= k,
/// 0 for gap >= multiplier * k, nothing in between.
std::optional<int> noadj_label(int gap, int k, int multiplier);

/// Pairs drawn directly from stored trajectories without a matrix.
std::vector<LabeledPair> sample_pairs_noadj(const TrajectoryBuffer& buffer, int n, int k, int multiplier,
                                            Rng& rng);

}  // namespace hrac::adjacency
