#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "wfrflow/kernels.hpp"
#include "wfrflow/oet.hpp"

using namespace wfrflow;

namespace {

struct Fixture {
  kernels::SparseLayout layout;
  std::vector<double> log_ref, cost, f, g, out;

  explicit Fixture(Index n) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<IndexPair> pairs;
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (u(rng) < 0.2) pairs.push_back({i, j});
    layout = kernels::SparseLayout::from_pairs(n, n, pairs);
    log_ref.assign(pairs.size(), 0.0);
    cost.resize(pairs.size());
    for (auto& c : cost) c = u(rng);
    f.assign(n, 0.1);
    g.assign(n, -0.1);
    out.resize(pairs.size());
  }
};

void BM_RowLse(benchmark::State& state) {
  Fixture fx(static_cast<Index>(state.range(0)));
  const int threads = static_cast<int>(state.range(1));
  for (auto _ : state) {
    kernels::row_logsumexp(fx.layout, fx.log_ref, fx.cost, fx.g, 100.0, fx.out, threads);
    benchmark::DoNotOptimize(fx.out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(fx.layout.nnz()));
}

void BM_ColLse(benchmark::State& state) {
  Fixture fx(static_cast<Index>(state.range(0)));
  const int threads = static_cast<int>(state.range(1));
  for (auto _ : state) {
    kernels::col_logsumexp(fx.layout, fx.log_ref, fx.cost, fx.f, 100.0, fx.out, threads);
    benchmark::DoNotOptimize(fx.out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(fx.layout.nnz()));
}

void BM_PlanEntries(benchmark::State& state) {
  Fixture fx(static_cast<Index>(state.range(0)));
  const int threads = static_cast<int>(state.range(1));
  for (auto _ : state) {
    kernels::plan_entries(fx.layout, fx.log_ref, fx.cost, fx.f, fx.g, 100.0, fx.out, threads);
    benchmark::DoNotOptimize(fx.out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(fx.layout.nnz()));
}

void BM_BlockSolve(benchmark::State& state) {
  const Index n = static_cast<Index>(state.range(0));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.0, 0.1);
  PointMatrix c0(n, 2), c1(n, 2);
  for (Index i = 0; i < n; ++i) {
    c0(i, 0) = noise(rng);
    c0(i, 1) = noise(rng);
    c1(i, 0) = c0(i, 0) + 5.0;
    c1(i, 1) = c0(i, 1);
  }
  const auto mask = SupportMask::full(n, n);
  const auto cost = build_cost(c0, c1, mask, 10.0);
  const Vec w = Vec::Ones(n);
  SolverOptions o;
  o.threads = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(solve_masked_oet(cost, w, w, mask, o).nnz());
}

}  // namespace

BENCHMARK(BM_RowLse)->ArgsProduct({{512, 2048}, {1, 2, 4}});
BENCHMARK(BM_ColLse)->ArgsProduct({{512, 2048}, {1, 2, 4}});
BENCHMARK(BM_PlanEntries)->ArgsProduct({{512, 2048}, {1, 2, 4}});
BENCHMARK(BM_BlockSolve)->Args({100, 1})->Args({200, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
