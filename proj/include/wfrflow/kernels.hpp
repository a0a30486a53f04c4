#pragma once

// Data-parallel inner loops of the coupling solver. `serial` is the reference
// implementation; `omp` distributes whole rows (or columns) across threads and
// performs each reduction in the same order, so both produce identical bits.

#include <span>
#include <vector>

#include "wfrflow/sparse.hpp"
#include "wfrflow/types.hpp"

namespace wfrflow::kernels {

// Row-major entry order plus a column-major permutation of the same entries.
struct SparseLayout {
  Index rows = 0;
  Index cols = 0;
  std::vector<Index> row_ptr;      // rows + 1
  std::vector<Index> col_of;       // per entry
  std::vector<Index> row_of;       // per entry
  std::vector<Index> col_ptr;      // cols + 1
  std::vector<Index> col_entries;  // entry ids grouped by column, rows ascending

  std::size_t nnz() const { return col_of.size(); }
  // pairs must be sorted by (row, col).
  static SparseLayout from_pairs(Index rows, Index cols, std::span<const IndexPair> pairs);
};

// -2 ln cosbar(|c0_i - c1_j| / (2 delta)); +inf at or past the pi/2 clamp.
double wfr_cost(double distance, double delta);

namespace serial {
void pair_costs(const PointMatrix& c0, const PointMatrix& c1, std::span<const IndexPair> pairs, double delta,
                std::span<double> out);
// out[i] = logsumexp over row i of log_ref[e] + (col_pot[col(e)] - cost[e]) * inv_eps; -inf for empty rows.
void row_logsumexp(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                   std::span<const double> col_pot, double inv_eps, std::span<double> out);
void col_logsumexp(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                   std::span<const double> row_pot, double inv_eps, std::span<double> out);
// gamma[e] = exp(log_ref[e] + (f[row(e)] + g[col(e)] - cost[e]) * inv_eps)
void plan_entries(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                  std::span<const double> f, std::span<const double> g, double inv_eps, std::span<double> gamma);
void row_sums(const SparseLayout& L, std::span<const double> values, std::span<double> out);
void col_sums(const SparseLayout& L, std::span<const double> values, std::span<double> out);
}  // namespace serial

namespace omp {
void pair_costs(const PointMatrix& c0, const PointMatrix& c1, std::span<const IndexPair> pairs, double delta,
                std::span<double> out, int threads);
void row_logsumexp(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                   std::span<const double> col_pot, double inv_eps, std::span<double> out, int threads);
void col_logsumexp(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                   std::span<const double> row_pot, double inv_eps, std::span<double> out, int threads);
void plan_entries(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                  std::span<const double> f, std::span<const double> g, double inv_eps, std::span<double> gamma,
                  int threads);
void row_sums(const SparseLayout& L, std::span<const double> values, std::span<double> out, int threads);
void col_sums(const SparseLayout& L, std::span<const double> values, std::span<double> out, int threads);
}  // namespace omp

// Dispatch: threads <= 1 runs the serial reference.
inline void pair_costs(const PointMatrix& c0, const PointMatrix& c1, std::span<const IndexPair> pairs, double delta,
                       std::span<double> out, int threads) {
  threads <= 1 ? serial::pair_costs(c0, c1, pairs, delta, out) : omp::pair_costs(c0, c1, pairs, delta, out, threads);
}
inline void row_logsumexp(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                          std::span<const double> col_pot, double inv_eps, std::span<double> out, int threads) {
  threads <= 1 ? serial::row_logsumexp(L, log_ref, cost, col_pot, inv_eps, out)
               : omp::row_logsumexp(L, log_ref, cost, col_pot, inv_eps, out, threads);
}
inline void col_logsumexp(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                          std::span<const double> row_pot, double inv_eps, std::span<double> out, int threads) {
  threads <= 1 ? serial::col_logsumexp(L, log_ref, cost, row_pot, inv_eps, out)
               : omp::col_logsumexp(L, log_ref, cost, row_pot, inv_eps, out, threads);
}
inline void plan_entries(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                         std::span<const double> f, std::span<const double> g, double inv_eps,
                         std::span<double> gamma, int threads) {
  threads <= 1 ? serial::plan_entries(L, log_ref, cost, f, g, inv_eps, gamma)
               : omp::plan_entries(L, log_ref, cost, f, g, inv_eps, gamma, threads);
}
inline void row_sums(const SparseLayout& L, std::span<const double> values, std::span<double> out, int threads) {
  threads <= 1 ? serial::row_sums(L, values, out) : omp::row_sums(L, values, out, threads);
}
inline void col_sums(const SparseLayout& L, std::span<const double> values, std::span<double> out, int threads) {
  threads <= 1 ? serial::col_sums(L, values, out) : omp::col_sums(L, values, out, threads);
}

}  // namespace wfrflow::kernels
