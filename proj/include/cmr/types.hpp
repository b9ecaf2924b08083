#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace cmr {

using NodeId = std::uint32_t;

/// The collector's identifier. Meters use positive IDs.
inline constexpr NodeId kCollectorId = 0;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace cmr
