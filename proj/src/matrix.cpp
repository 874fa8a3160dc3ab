#include "adascope/matrix.hpp"

#include <cmath>

#include "adascope/error.hpp"

namespace adascope {

Matrix gather_rows(const Matrix& m, const NodeSet& nodes) {
  Matrix out(static_cast<Eigen::Index>(nodes.size()), m.cols());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(nodes[i]);
  }
  return out;
}

void check_finite(const Matrix& m, const std::string& where) {
  if (!m.allFinite()) fail(ErrorKind::kNumeric, "non-finite values in " + where);
}

Eigen::Index argmax_row(const Matrix& m, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c) {
    if (m(r, c) > m(r, best)) best = c;
  }
  return best;
}

}  // namespace adascope
