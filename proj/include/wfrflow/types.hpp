#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace wfrflow {

using Vec = Eigen::VectorXd;
// One point per row.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = std::int32_t;

}  // namespace wfrflow
