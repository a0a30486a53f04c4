#include <omp.h>

#include <cmath>
#include <limits>

#include "wfrflow/kernels.hpp"

namespace wfrflow::kernels::omp {

void pair_costs(const PointMatrix& c0, const PointMatrix& c1, std::span<const IndexPair> pairs, double delta,
                std::span<double> out, int threads) {
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for num_threads(threads) schedule(static)
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    const double d = (c0.row(pairs[e].row) - c1.row(pairs[e].col)).norm();
    out[e] = wfr_cost(d, delta);
  }
}

void row_logsumexp(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                   std::span<const double> col_pot, double inv_eps, std::span<double> out, int threads) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
#pragma omp parallel for num_threads(threads) schedule(dynamic, 64)
  for (Index i = 0; i < L.rows; ++i) {
    double mx = ninf;
    for (Index e = L.row_ptr[i]; e < L.row_ptr[i + 1]; ++e)
      mx = std::max(mx, log_ref[e] + (col_pot[L.col_of[e]] - cost[e]) * inv_eps);
    if (mx == ninf) {
      out[i] = ninf;
      continue;
    }
    double s = 0.0;
    for (Index e = L.row_ptr[i]; e < L.row_ptr[i + 1]; ++e)
      s += std::exp(log_ref[e] + (col_pot[L.col_of[e]] - cost[e]) * inv_eps - mx);
    out[i] = mx + std::log(s);
  }
}

void col_logsumexp(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                   std::span<const double> row_pot, double inv_eps, std::span<double> out, int threads) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
#pragma omp parallel for num_threads(threads) schedule(dynamic, 64)
  for (Index j = 0; j < L.cols; ++j) {
    double mx = ninf;
    for (Index k = L.col_ptr[j]; k < L.col_ptr[j + 1]; ++k) {
      const Index e = L.col_entries[k];
      mx = std::max(mx, log_ref[e] + (row_pot[L.row_of[e]] - cost[e]) * inv_eps);
    }
    if (mx == ninf) {
      out[j] = ninf;
      continue;
    }
    double s = 0.0;
    for (Index k = L.col_ptr[j]; k < L.col_ptr[j + 1]; ++k) {
      const Index e = L.col_entries[k];
      s += std::exp(log_ref[e] + (row_pot[L.row_of[e]] - cost[e]) * inv_eps - mx);
    }
    out[j] = mx + std::log(s);
  }
}

void plan_entries(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                  std::span<const double> f, std::span<const double> g, double inv_eps, std::span<double> gamma,
                  int threads) {
#pragma omp parallel for num_threads(threads) schedule(dynamic, 64)
  for (Index i = 0; i < L.rows; ++i)
    for (Index e = L.row_ptr[i]; e < L.row_ptr[i + 1]; ++e)
      gamma[e] = std::exp(log_ref[e] + (f[i] + g[L.col_of[e]] - cost[e]) * inv_eps);
}

void row_sums(const SparseLayout& L, std::span<const double> values, std::span<double> out, int threads) {
#pragma omp parallel for num_threads(threads) schedule(dynamic, 64)
  for (Index i = 0; i < L.rows; ++i) {
    double s = 0.0;
    for (Index e = L.row_ptr[i]; e < L.row_ptr[i + 1]; ++e) s += values[e];
    out[i] = s;
  }
}

void col_sums(const SparseLayout& L, std::span<const double> values, std::span<double> out, int threads) {
#pragma omp parallel for num_threads(threads) schedule(dynamic, 64)
  for (Index j = 0; j < L.cols; ++j) {
    double s = 0.0;
    for (Index k = L.col_ptr[j]; k < L.col_ptr[j + 1]; ++k) s += values[L.col_entries[k]];
    out[j] = s;
  }
}

}  // namespace wfrflow::kernels::omp
