// OpenMP kernels against their serial references.
#include <benchmark/benchmark.h>

#include "hrac/embed.hpp"
#include "hrac/gridworld.hpp"
#include "hrac/oracle.hpp"

using namespace hrac;

namespace {

TabularMdp mdp_of_size(int n) {
  Rng rng(17);
  return gen_random_mdp(n, 4, rng);
}

void BM_DistanceBfs(benchmark::State& st) {
  const auto mdp = mdp_of_size(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(oracle::shortest_transition_distance(mdp));
}

void BM_DistanceFloydWarshall(benchmark::State& st) {
  const auto mdp = mdp_of_size(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(oracle::floyd_warshall_reference(mdp));
}

// Grid-world graph of the Key-Chest layout.
void BM_DistanceBfsKeyChest(benchmark::State& st) {
  const auto g = grid_graph(make_keychest_config(0.0).layout);
  for (auto _ : st) benchmark::DoNotOptimize(oracle::shortest_transition_distance(g.mdp));
}

void BM_DistanceFloydWarshallKeyChest(benchmark::State& st) {
  const auto g = grid_graph(make_keychest_config(0.0).layout);
  for (auto _ : st) benchmark::DoNotOptimize(oracle::floyd_warshall_reference(g.mdp));
}

struct PsiFixture {
  embed::AdjacencyNet psi;
  std::vector<Cell> cells;
};

PsiFixture psi_fixture() {
  const auto env = make_keychest_config(0.0);
  Rng rng(3);
  return {embed::AdjacencyNet::create({}, {env.layout.width(), env.layout.height()}, rng),
          grid_graph(env.layout).cells};
}

void BM_Pairwise(benchmark::State& st) {
  const auto f = psi_fixture();
  for (auto _ : st) benchmark::DoNotOptimize(embed::pairwise_distances(f.psi, f.cells));
}

void BM_PairwiseReference(benchmark::State& st) {
  const auto f = psi_fixture();
  for (auto _ : st) benchmark::DoNotOptimize(embed::pairwise_distances_reference(f.psi, f.cells));
}

}  // namespace

BENCHMARK(BM_DistanceBfs)->Arg(100)->Arg(400)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DistanceFloydWarshall)->Arg(100)->Arg(400)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DistanceBfsKeyChest)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DistanceFloydWarshallKeyChest)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Pairwise)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PairwiseReference)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
