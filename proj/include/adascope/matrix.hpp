#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace adascope {

/// Row-major dense matrix of doubles; one node per row throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using NodeId = std::uint32_t;
using NodeSet = std::vector<NodeId>;

/// Rows of `m` selected by `nodes`, in order.
Matrix gather_rows(const Matrix& m, const NodeSet& nodes);

/// Throws a numeric error naming `where` if any entry is NaN or infinite.
void check_finite(const Matrix& m, const std::string& where);

/// Index of the largest entry in row `r`; ties go to the lowest index.
Eigen::Index argmax_row(const Matrix& m, Eigen::Index r);

}  // namespace adascope
