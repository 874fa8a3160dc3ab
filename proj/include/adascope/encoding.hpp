#pragma once

#include <string>
#include <vector>

#include "adascope/graph.hpp"
#include "adascope/matrix.hpp"

namespace adascope {

/// Features smoothed 0..lmax times by the symmetric operator, plus the
/// infinite-propagation limit.
struct SmoothedStack {
  std::vector<Matrix> levels;  // levels[0] is the input features
  Matrix limit;
};

/// Closed-form limit of repeated symmetric propagation, evaluated as a rank-one
/// product: row v is sqrt(d_v+1)/(2|E|+|V|) * sum_u sqrt(d_u+1) x_u. Directed
/// graphs are symmetrized for this computation only.
Matrix infinite_limit(const Graph& g, const Matrix& x);

SmoothedStack smoothed_stack(const Graph& g, const PropagationOperator& op, const Matrix& x, int lmax);
SmoothedStack smoothed_stack(const Graph& g, const Matrix& x, int lmax);

struct Smoothness {
  Matrix from_origin;  // n x lmax, column L-1 = ||X^(L)_v - X_v||
  Matrix from_limit;   // n x (lmax+1), column L = ||X^(L)_v - X^(inf)_v||
};

Smoothness smoothness(const SmoothedStack& stack);

struct EncodingConfig {
  int lmax = 6;
  PageRankConfig pagerank;
  bool standardize = true;
};

/// Per-node vector [pagerank, eps_bar(1..lmax), eps_tilde(0..lmax)].
struct StructuralEncoding {
  int lmax = 0;
  Matrix raw;       // n x 2(lmax+1)
  Matrix features;  // raw, column-standardized when configured
  std::vector<std::string> legend;
  bool pagerank_converged = true;
};

StructuralEncoding structural_encoding(const Graph& g, const Matrix& x, const EncodingConfig& cfg = {});

/// Zero mean, unit variance per column; constant columns become zero.
Matrix standardize_columns(const Matrix& m);

}  // namespace adascope
