#include "wfrflow/oet.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include "wfrflow/error.hpp"
#include "wfrflow/kernels.hpp"

namespace wfrflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_weights(const Vec& w, Index expected, const char* name) {
  if (w.size() != expected) throw InvalidArgument(std::string(name) + " size does not match the cost matrix");
  bool positive = false;
  for (Index i = 0; i < w.size(); ++i) {
    if (!(w[i] >= 0.0) || !std::isfinite(w[i])) throw InvalidArgument(std::string(name) + " must be finite and >= 0");
    positive = positive || w[i] > 0.0;
  }
  if (!positive) throw InvalidArgument(std::string(name) + " needs at least one positive entry");
}

void check_options(const SolverOptions& o) {
  if (!(o.final_eps > 0.0) || !(o.initial_eps >= o.final_eps))
    throw InvalidArgument("need initial_eps >= final_eps > 0");
  if (!(o.eps_decay > 0.0 && o.eps_decay < 1.0)) throw InvalidArgument("eps_decay must lie in (0, 1)");
  if (!(o.tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (o.max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
}

double kl_term(double a, double b) {
  if (a == 0.0) return b;
  if (b == 0.0) return kInf;
  return a * std::log(a / b) - a + b;
}

// Admissible entries: in the mask, stored in the cost, finite, with positive
// marginal weight on both ends.
void admissible_entries(const CostMatrix& cost, const Vec& w0, const Vec& w1, const SupportMask& mask,
                        std::vector<IndexPair>& pairs, std::vector<double>& costs) {
  const auto entries = cost.entries();
  const auto& allowed = mask.allowed();
  std::size_t a = 0;
  for (const auto& t : entries) {
    const IndexPair p{t.row, t.col};
    while (a < allowed.size() && allowed[a] < p) ++a;
    if (a == allowed.size()) break;
    if (allowed[a] != p) continue;
    if (!std::isfinite(t.value) || w0[t.row] <= 0.0 || w1[t.col] <= 0.0) continue;
    if (t.value < 0.0) throw InvalidArgument("negative cost entry");
    pairs.push_back(p);
    costs.push_back(t.value);
  }
}

std::vector<double> anneal_schedule(const SolverOptions& o) {
  std::vector<double> eps;
  for (double e = o.initial_eps; e > o.final_eps * (1.0 + 1e-9); e *= o.eps_decay) eps.push_back(e);
  eps.push_back(o.final_eps);
  return eps;
}

SparseCoupling solve_sinkhorn(Index K0, Index K1, const std::vector<IndexPair>& pairs,
                              const std::vector<double>& costs, const Vec& w0, const Vec& w1,
                              const SolverOptions& o, SolveStats& stats) {
  const auto L = kernels::SparseLayout::from_pairs(K0, K1, pairs);
  const std::size_t nnz = pairs.size();
  std::vector<double> lr(nnz);
  for (std::size_t e = 0; e < nnz; ++e) lr[e] = 0.5 * (std::log(w0[pairs[e].row]) + std::log(w1[pairs[e].col]));
  std::vector<double> f(K0, 0.0), g(K1, 0.0), lse0(K0), lse1(K1);
  const auto schedule = anneal_schedule(o);
  double residual = kInf;
  bool converged = false;
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const double eps = schedule[s];
    const bool last = s + 1 == schedule.size();
    const double tol = last ? o.tolerance : std::max(o.tolerance, 1e-6);
    const double damp = eps / (1.0 + eps);
    converged = false;
    for (int it = 0; it < o.max_iters; ++it) {
      kernels::row_logsumexp(L, lr, costs, g, 1.0 / eps, lse0, o.threads);
      double change = 0.0;
      for (Index i = 0; i < K0; ++i) {
        const double nf = (lse0[i] == -kInf || w0[i] <= 0.0) ? 0.0 : damp * (std::log(w0[i]) - lse0[i]);
        change = std::max(change, std::abs(nf - f[i]));
        f[i] = nf;
      }
      kernels::col_logsumexp(L, lr, costs, f, 1.0 / eps, lse1, o.threads);
      for (Index j = 0; j < K1; ++j) {
        const double ng = (lse1[j] == -kInf || w1[j] <= 0.0) ? 0.0 : damp * (std::log(w1[j]) - lse1[j]);
        change = std::max(change, std::abs(ng - g[j]));
        g[j] = ng;
      }
      ++stats.iterations;
      residual = change;
      if (change < tol) {
        converged = true;
        break;
      }
    }
    ++stats.stages;
  }
  stats.residual = residual;
  if (!converged) throw ConvergenceError("sinkhorn did not converge within max_iters", residual);
  std::vector<double> gamma(nnz);
  kernels::plan_entries(L, lr, costs, f, g, 1.0 / schedule.back(), gamma, o.threads);
  std::vector<Triplet> out;
  out.reserve(nnz);
  for (std::size_t e = 0; e < nnz; ++e)
    if (gamma[e] > 0.0) out.push_back({pairs[e].row, pairs[e].col, gamma[e]});
  return SparseCoupling(K0, K1, std::move(out));
}

SparseCoupling solve_newton(Index K0, Index K1, const std::vector<IndexPair>& pairs,
                            const std::vector<double>& costs, const Vec& w0, const Vec& w1,
                            const SolverOptions& o, SolveStats& stats) {
  const auto blocks = detail::split_components(K0, K1, pairs, costs);
  stats.components = blocks.size();
  stats.stages = static_cast<int>(anneal_schedule(o).size());
  std::vector<double> gamma(pairs.size(), 0.0);
  std::vector<detail::BlockResult> results(blocks.size());
  std::exception_ptr failure;
  const auto nb = static_cast<std::ptrdiff_t>(blocks.size());
#pragma omp parallel for num_threads(std::max(1, o.threads)) schedule(dynamic, 1) if (o.threads > 1)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    try {
      std::vector<double> local;
      results[b] = detail::solve_block_newton(blocks[b], w0, w1, o, local);
      for (std::size_t e = 0; e < local.size(); ++e) gamma[blocks[b].global_entry[e]] = local[e];
    } catch (...) {
#pragma omp critical(wfrflow_oet_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  bool converged = true;
  for (const auto& r : results) {
    stats.iterations += r.iterations;
    stats.residual = std::max(stats.residual, r.residual);
    converged = converged && r.converged;
  }
  if (!converged) throw ConvergenceError("newton solver did not converge within max_iters", stats.residual);
  std::vector<Triplet> out;
  out.reserve(pairs.size());
  for (std::size_t e = 0; e < pairs.size(); ++e)
    if (gamma[e] > 0.0) out.push_back({pairs[e].row, pairs[e].col, gamma[e]});
  return SparseCoupling(K0, K1, std::move(out));
}

}  // namespace

SolverMethod parse_solver_method(const std::string& name) {
  if (name == "newton") return SolverMethod::Newton;
  if (name == "sinkhorn") return SolverMethod::Sinkhorn;
  throw InvalidArgument("unknown solver method '" + name + "' (expected newton or sinkhorn)");
}

const char* to_string(SolverMethod m) { return m == SolverMethod::Newton ? "newton" : "sinkhorn"; }

CostMatrix build_cost(const PointMatrix& centroids0, const PointMatrix& centroids1, const SupportMask& mask,
                      double delta, int threads) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be positive and finite");
  if (centroids0.cols() != centroids1.cols()) throw InvalidArgument("centroid dimension mismatch");
  if (mask.rows() != centroids0.rows() || mask.cols() != centroids1.rows())
    throw InvalidArgument("mask shape does not match centroid counts");
  const auto& pairs = mask.allowed();
  std::vector<double> values(pairs.size());
  kernels::pair_costs(centroids0, centroids1, pairs, delta, values, threads);
  std::vector<Triplet> entries(pairs.size());
  for (std::size_t e = 0; e < pairs.size(); ++e) entries[e] = {pairs[e].row, pairs[e].col, values[e]};
  return CostMatrix(mask.rows(), mask.cols(), std::move(entries));
}

SparseCoupling solve_masked_oet(const CostMatrix& cost, const Vec& w0, const Vec& w1, const SupportMask& mask,
                                const SolverOptions& options, SolveStats* stats) {
  check_options(options);
  check_weights(w0, cost.rows(), "w0");
  check_weights(w1, cost.cols(), "w1");
  if (mask.rows() != cost.rows() || mask.cols() != cost.cols())
    throw InvalidArgument("mask shape does not match the cost matrix");
  std::vector<IndexPair> pairs;
  std::vector<double> costs;
  admissible_entries(cost, w0, w1, mask, pairs, costs);
  SolveStats local;
  local.final_eps = options.final_eps;
  local.support = pairs.size();
  SparseCoupling result(cost.rows(), cost.cols());
  if (!pairs.empty()) {
    // The problem is homogeneous in (w0, w1); solving at unit scale keeps the
    // iterates independent of the overall mass.
    const double scale = 0.5 * (w0.sum() + w1.sum());
    const Vec u0 = w0 / scale, u1 = w1 / scale;
    result = options.method == SolverMethod::Newton
                 ? solve_newton(cost.rows(), cost.cols(), pairs, costs, u0, u1, options, local)
                 : solve_sinkhorn(cost.rows(), cost.cols(), pairs, costs, u0, u1, options, local);
    for (auto& t : result.mutable_entries()) t.value *= scale;
  }
  if (stats) *stats = local;
  return result;
}

double oet_objective(const SparseCoupling& gamma, const CostMatrix& cost, const Vec& w0, const Vec& w1) {
  if (gamma.rows() != cost.rows() || gamma.cols() != cost.cols() || w0.size() != cost.rows() ||
      w1.size() != cost.cols())
    throw InvalidArgument("objective operands have mismatched shapes");
  double transport = 0.0;
  for (const auto& t : gamma.entries()) {
    if (t.value == 0.0) continue;
    const double c = cost.value_at(t.row, t.col, kInf);
    if (!std::isfinite(c)) return kInf;
    transport += c * t.value;
  }
  const auto r = gamma.row_sums();
  const auto s = gamma.col_sums();
  double kl = 0.0;
  for (Index i = 0; i < cost.rows(); ++i) kl += kl_term(r[i], w0[i]);
  for (Index j = 0; j < cost.cols(); ++j) kl += kl_term(s[j], w1[j]);
  return transport + kl;
}

SemiCoupling extract_semi_coupling(const SparseCoupling& gamma, const Vec& mu0, const Vec& mu1,
                                   const SolverOptions& options) {
  const Index K0 = gamma.rows();
  const Index K1 = gamma.cols();
  if (mu0.size() != K0 || mu1.size() != K1) throw InvalidArgument("marginal sizes do not match the coupling");
  const double row_floor = K0 > 0 ? options.row_floor_scale * mu0.sum() / K0 : 0.0;
  const double col_floor = K1 > 0 ? options.row_floor_scale * mu1.sum() / K1 : 0.0;
  const auto entries = gamma.entries();

  std::vector<char> dead(K0, 0), born(K1, 0);
  for (Index i = 0; i < K0; ++i) dead[i] = !(mu0[i] > 0.0);
  for (Index j = 0; j < K1; ++j) born[j] = !(mu1[j] > 0.0);
  std::vector<double> r(K0), s(K1);
  // Dropping a birth column can starve a row and vice versa; repeat until stable.
  for (bool changed = true; changed;) {
    changed = false;
    std::fill(r.begin(), r.end(), 0.0);
    std::fill(s.begin(), s.end(), 0.0);
    for (const auto& t : entries) {
      if (dead[t.row] || born[t.col] || !(t.value > 0.0)) continue;
      r[t.row] += t.value;
      s[t.col] += t.value;
    }
    for (Index i = 0; i < K0; ++i)
      if (!dead[i] && !(r[i] >= row_floor && r[i] > 0.0)) dead[i] = 1, changed = true;
    for (Index j = 0; j < K1; ++j)
      if (!born[j] && !(s[j] >= col_floor && s[j] > 0.0)) born[j] = 1, changed = true;
  }

  std::vector<Triplet> e0, e1;
  for (const auto& t : entries) {
    if (dead[t.row] || born[t.col] || !(t.value > 0.0)) continue;
    e0.push_back({t.row, t.col, t.value / r[t.row] * mu0[t.row]});
    e1.push_back({t.row, t.col, t.value / s[t.col] * mu1[t.col]});
  }
  SemiCoupling out{SparseCoupling(K0, K1, std::move(e0)), SparseCoupling(K0, K1, std::move(e1)), {}, {}};
  for (Index i = 0; i < K0; ++i)
    if (dead[i]) out.death_rows.push_back(i);
  for (Index j = 0; j < K1; ++j)
    if (born[j]) out.birth_cols.push_back(j);
  return out;
}

namespace detail {

std::vector<OetBlock> split_components(Index rows, Index cols, const std::vector<IndexPair>& pairs,
                                       const std::vector<double>& costs) {
  std::vector<Index> parent(static_cast<std::size_t>(rows) + cols);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](Index v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& p : pairs) {
    const Index a = find(p.row), b = find(rows + p.col);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<Index> block_of(parent.size(), -1);
  std::vector<OetBlock> blocks;
  std::vector<Index> local_row(rows, -1), local_col(cols, -1);
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const Index root = find(pairs[e].row);
    if (block_of[root] < 0) {
      block_of[root] = static_cast<Index>(blocks.size());
      blocks.emplace_back();
    }
    auto& B = blocks[block_of[root]];
    const Index i = pairs[e].row, j = pairs[e].col;
    if (local_row[i] < 0) {
      local_row[i] = static_cast<Index>(B.rows.size());
      B.rows.push_back(i);
    }
    B.global_entry.push_back(e);
    B.cost.push_back(costs[e]);
    B.entry_row.push_back(local_row[i]);
    B.entry_col.push_back(j);  // remapped below once all columns are known
  }
  for (auto& B : blocks) {
    for (auto& j : B.entry_col) B.cols.push_back(j);
    std::sort(B.cols.begin(), B.cols.end());
    B.cols.erase(std::unique(B.cols.begin(), B.cols.end()), B.cols.end());
    for (std::size_t k = 0; k < B.cols.size(); ++k) local_col[B.cols[k]] = static_cast<Index>(k);
    for (auto& j : B.entry_col) j = local_col[j];
  }
  return blocks;
}

}  // namespace detail

}  // namespace wfrflow
