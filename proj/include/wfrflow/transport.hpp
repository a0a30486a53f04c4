#pragma once

// Exact balanced discrete optimal transport by primal network simplex with
// block-search pricing on the dense bipartite graph, started from an
// artificial big-M tree and kept strongly feasible.

#include <Eigen/Core>

#include "wfrflow/types.hpp"

namespace wfrflow {

struct ExactTransport {
  double cost = 0.0;
  Eigen::MatrixXd plan;  // n x m
  long long pivots = 0;
};

// a and b are non-negative with equal totals (checked to 1e-9 relative);
// cost is n x m, finite and non-negative.
ExactTransport exact_transport(const Vec& a, const Vec& b, const Eigen::MatrixXd& cost);

// Pairwise Euclidean distances between the rows of two point sets.
Eigen::MatrixXd euclidean_costs(const PointMatrix& x, const PointMatrix& y);

}  // namespace wfrflow
