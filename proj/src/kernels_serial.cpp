#include <cmath>
#include <limits>
#include <numbers>

#include "wfrflow/error.hpp"
#include "wfrflow/kernels.hpp"

namespace wfrflow::kernels {

SparseLayout SparseLayout::from_pairs(Index rows, Index cols, std::span<const IndexPair> pairs) {
  SparseLayout L;
  L.rows = rows;
  L.cols = cols;
  const auto nnz = pairs.size();
  L.row_ptr.assign(static_cast<std::size_t>(rows) + 1, 0);
  L.col_ptr.assign(static_cast<std::size_t>(cols) + 1, 0);
  L.col_of.resize(nnz);
  L.row_of.resize(nnz);
  for (std::size_t e = 0; e < nnz; ++e) {
    const auto& p = pairs[e];
    if (e > 0 && !(pairs[e - 1] < p)) throw InvalidArgument("layout pairs must be sorted and unique");
    L.row_of[e] = p.row;
    L.col_of[e] = p.col;
    ++L.row_ptr[p.row + 1];
    ++L.col_ptr[p.col + 1];
  }
  for (Index i = 0; i < rows; ++i) L.row_ptr[i + 1] += L.row_ptr[i];
  for (Index j = 0; j < cols; ++j) L.col_ptr[j + 1] += L.col_ptr[j];
  L.col_entries.resize(nnz);
  std::vector<Index> fill(L.col_ptr.begin(), L.col_ptr.end() - 1);
  for (std::size_t e = 0; e < nnz; ++e) L.col_entries[fill[L.col_of[e]]++] = static_cast<Index>(e);
  return L;
}

double wfr_cost(double distance, double delta) {
  const double arg = distance / (2.0 * delta);
  if (arg >= std::numbers::pi / 2.0) return std::numeric_limits<double>::infinity();
  return -2.0 * std::log(std::cos(arg));
}

namespace serial {

void pair_costs(const PointMatrix& c0, const PointMatrix& c1, std::span<const IndexPair> pairs, double delta,
                std::span<double> out) {
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const double d = (c0.row(pairs[e].row) - c1.row(pairs[e].col)).norm();
    out[e] = wfr_cost(d, delta);
  }
}

void row_logsumexp(const SparseLayout& L, std::span<const double> log_ref, std::span<const double> cost,
                   std::span<const double> col_pot, double inv_eps, std::span<double> out) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
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
                   std::span<const double> row_pot, double inv_eps, std::span<double> out) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
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
                  std::span<const double> f, std::span<const double> g, double inv_eps, std::span<double> gamma) {
  for (Index i = 0; i < L.rows; ++i)
    for (Index e = L.row_ptr[i]; e < L.row_ptr[i + 1]; ++e)
      gamma[e] = std::exp(log_ref[e] + (f[i] + g[L.col_of[e]] - cost[e]) * inv_eps);
}

void row_sums(const SparseLayout& L, std::span<const double> values, std::span<double> out) {
  for (Index i = 0; i < L.rows; ++i) {
    double s = 0.0;
    for (Index e = L.row_ptr[i]; e < L.row_ptr[i + 1]; ++e) s += values[e];
    out[i] = s;
  }
}

void col_sums(const SparseLayout& L, std::span<const double> values, std::span<double> out) {
  for (Index j = 0; j < L.cols; ++j) {
    double s = 0.0;
    for (Index k = L.col_ptr[j]; k < L.col_ptr[j + 1]; ++k) s += values[L.col_entries[k]];
    out[j] = s;
  }
}

}  // namespace serial
}  // namespace wfrflow::kernels
