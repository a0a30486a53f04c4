#pragma once

// Masked optimal entropy-transport between two weighted point sets:
//   min_{gamma >= 0 on mask}  <C, gamma> + KL(gamma 1 | w0) + KL(gamma^T 1 | w1)
// with KL(a|b) = sum a ln(a/b) - a + b and 0 ln 0 = 0.

#include <cstddef>
#include <string>
#include <vector>

#include "wfrflow/sparse.hpp"
#include "wfrflow/types.hpp"

namespace wfrflow {

enum class SolverMethod { Newton, Sinkhorn };

SolverMethod parse_solver_method(const std::string& name);
const char* to_string(SolverMethod m);

struct SolverOptions {
  SolverMethod method = SolverMethod::Newton;
  // Entropic regularization is annealed geometrically from initial_eps down to final_eps.
  double initial_eps = 1.0;
  double final_eps = 1e-9;
  double eps_decay = 0.1;
  // Final-stage stopping threshold on the max marginal log-residual.
  double tolerance = 1e-9;
  // Iteration cap per annealing stage.
  int max_iters = 10000;
  int threads = 1;
  // Components whose smaller side is at most this size use a dense Schur-complement Newton step.
  int dense_newton_limit = 2048;
  // Semi-coupling extraction floor, relative to the mean marginal mass.
  double row_floor_scale = 1e-12;
};

struct SolveStats {
  int stages = 0;
  long iterations = 0;
  double residual = 0.0;
  double final_eps = 0.0;
  std::size_t components = 0;
  std::size_t support = 0;
};

struct SemiCoupling {
  SparseCoupling gamma0;
  SparseCoupling gamma1;
  std::vector<Index> death_rows;
  std::vector<Index> birth_cols;
};

// Costs on the mask only; pairs at or past the cosine clamp are stored as +inf.
CostMatrix build_cost(const PointMatrix& centroids0, const PointMatrix& centroids1, const SupportMask& mask,
                      double delta, int threads = 1);

// Stored entries of `cost` that are in `mask` and finite form the admissible set.
SparseCoupling solve_masked_oet(const CostMatrix& cost, const Vec& w0, const Vec& w1, const SupportMask& mask,
                                const SolverOptions& options = {}, SolveStats* stats = nullptr);

// Returns +inf when gamma has mass on an absent or infinite cost entry.
double oet_objective(const SparseCoupling& gamma, const CostMatrix& cost, const Vec& w0, const Vec& w1);

SemiCoupling extract_semi_coupling(const SparseCoupling& gamma, const Vec& mu0, const Vec& mu1,
                                   const SolverOptions& options = {});

namespace detail {

// One connected block of the admissible graph, with local row/col numbering.
struct OetBlock {
  std::vector<Index> rows;  // global row ids, ascending
  std::vector<Index> cols;  // global col ids, ascending
  std::vector<Index> entry_row;  // local row per entry, entries sorted by (row, col)
  std::vector<Index> entry_col;
  std::vector<double> cost;
  std::vector<std::size_t> global_entry;  // index into the admissible entry list
};

std::vector<OetBlock> split_components(Index rows, Index cols, const std::vector<IndexPair>& pairs,
                                       const std::vector<double>& costs);

// Writes the block's plan into gamma (indexed like OetBlock::cost). Returns
// {iterations, final residual, converged}.
struct BlockResult {
  long iterations = 0;
  double residual = 0.0;
  bool converged = false;
};
BlockResult solve_block_newton(const OetBlock& block, const Vec& w0, const Vec& w1, const SolverOptions& options,
                               std::vector<double>& gamma);

}  // namespace detail

}  // namespace wfrflow
