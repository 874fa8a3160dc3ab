#include "adascope/encoding.hpp"

#include <cmath>

#include "adascope/error.hpp"

namespace adascope {

Matrix infinite_limit(const Graph& g, const Matrix& x) {
  require(static_cast<std::size_t>(x.rows()) == g.num_nodes(), "infinite_limit: row count mismatch");
  const Graph sym = g.directed() ? g.symmetrized() : Graph{};
  const Graph& und = g.directed() ? sym : g;
  const std::size_t n = und.num_nodes();
  Vector root(static_cast<Eigen::Index>(n));
  for (std::size_t v = 0; v < n; ++v) {
    root(static_cast<Eigen::Index>(v)) = std::sqrt(static_cast<double>(und.in_degree(static_cast<NodeId>(v)) + 1));
  }
  const double denom = 2.0 * static_cast<double>(und.num_edges()) + static_cast<double>(n);
  const RowVector pooled = root.transpose() * x;
  return (root / denom) * pooled;
}

SmoothedStack smoothed_stack(const Graph& g, const PropagationOperator& op, const Matrix& x, int lmax) {
  if (lmax < 1) fail(ErrorKind::kConfig, "smoothed_stack: lmax must be at least 1");
  require(op.kind == PropagationKind::kSymmetric, "smoothed_stack: needs the symmetric operator");
  SmoothedStack s;
  s.levels.reserve(static_cast<std::size_t>(lmax) + 1);
  s.levels.push_back(x);
  for (int l = 1; l <= lmax; ++l) s.levels.push_back(propagate(op, s.levels.back()));
  s.limit = infinite_limit(g, x);
  return s;
}

SmoothedStack smoothed_stack(const Graph& g, const Matrix& x, int lmax) {
  return smoothed_stack(g, symmetric_normalized(g), x, lmax);
}

Smoothness smoothness(const SmoothedStack& stack) {
  const auto lmax = static_cast<Eigen::Index>(stack.levels.size()) - 1;
  const Matrix& x0 = stack.levels.front();
  Smoothness s;
  s.from_origin.resize(x0.rows(), lmax);
  s.from_limit.resize(x0.rows(), lmax + 1);
  for (Eigen::Index l = 0; l <= lmax; ++l) {
    const Matrix& xl = stack.levels[static_cast<std::size_t>(l)];
    s.from_limit.col(l) = (xl - stack.limit).rowwise().norm();
    if (l > 0) s.from_origin.col(l - 1) = (xl - x0).rowwise().norm();
  }
  return s;
}

Matrix standardize_columns(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  if (m.rows() == 0) return out;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double mean = m.col(c).mean();
    const Vector centered = m.col(c).array() - mean;
    const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(m.rows()));
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      out.col(c) = centered / sd;
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

StructuralEncoding structural_encoding(const Graph& g, const Matrix& x, const EncodingConfig& cfg) {
  const int lmax = cfg.lmax;
  const SmoothedStack stack = smoothed_stack(g, x, lmax);
  const Smoothness eps = smoothness(stack);
  const PageRankResult pr = pagerank(g, cfg.pagerank);

  StructuralEncoding enc;
  enc.lmax = lmax;
  enc.pagerank_converged = pr.converged;
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  enc.raw.resize(n, 2 * (lmax + 1));
  for (Eigen::Index v = 0; v < n; ++v) enc.raw(v, 0) = pr.scores[static_cast<std::size_t>(v)];
  enc.raw.middleCols(1, lmax) = eps.from_origin;
  enc.raw.middleCols(1 + lmax, lmax + 1) = eps.from_limit;

  enc.legend.push_back("pagerank");
  for (int l = 1; l <= lmax; ++l) enc.legend.push_back("dist_origin_" + std::to_string(l));
  for (int l = 0; l <= lmax; ++l) enc.legend.push_back("dist_limit_" + std::to_string(l));
  enc.features = cfg.standardize ? standardize_columns(enc.raw) : enc.raw;
  return enc;
}

}  // namespace adascope
