#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "adascope/matrix.hpp"

namespace adascope {

using Edge = std::pair<NodeId, NodeId>;  // (source, destination)

/// Immutable unweighted graph in compressed-row layout. Row v lists the
/// in-neighbors of v (sources of arcs u -> v), sorted ascending. Undirected
/// graphs store both arcs of every edge. Self-loops are never stored.
class Graph {
 public:
  Graph() = default;

  std::size_t num_nodes() const { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
  std::size_t num_arcs() const { return col_idx_.size(); }
  /// Undirected edge count for undirected graphs, arc count otherwise.
  std::size_t num_edges() const { return directed_ ? num_arcs() : num_arcs() / 2; }
  bool directed() const { return directed_; }

  std::span<const NodeId> in_neighbors(NodeId v) const {
    return {col_idx_.data() + row_ptr_[v], row_ptr_[v + 1] - row_ptr_[v]};
  }
  std::size_t in_degree(NodeId v) const { return row_ptr_[v + 1] - row_ptr_[v]; }
  std::vector<std::size_t> in_degrees() const;
  std::vector<std::size_t> out_degrees() const;

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<NodeId>& col_idx() const { return col_idx_; }

  /// Arcs as (source, destination), ordered by destination then source.
  std::vector<Edge> arcs() const;

  /// Undirected copy: every arc mirrored. Returns *this unchanged if already undirected.
  Graph symmetrized() const;

  /// Graph with node v renamed to perm[v].
  Graph permuted(std::span<const NodeId> perm) const;

  friend Graph build_graph(std::span<const Edge> edges, std::size_t num_nodes, bool directed);

 private:
  std::vector<std::size_t> row_ptr_;
  std::vector<NodeId> col_idx_;
  bool directed_ = false;
};

/// Builds a graph from (source, destination) pairs. Duplicates and self-loops
/// are dropped; undirected input is mirrored. An out-of-range id raises an
/// input error naming the 1-based position of the offending edge.
Graph build_graph(std::span<const Edge> edges, std::size_t num_nodes, bool directed);

/// Sparse square matrix in compressed-row layout.
struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<NodeId> col_idx;
  std::vector<double> values;

  Matrix to_dense() const;
  CsrMatrix transposed() const;
};

enum class PropagationKind { kSymmetric, kRowNormalized };

struct PropagationOperator {
  PropagationKind kind;
  CsrMatrix matrix;
};

/// D^-1/2 (A + I) D^-1/2 with degrees taken as row lengths plus one.
PropagationOperator symmetric_normalized(const Graph& g);

/// D^-1 A over in-neighbors; zero-degree rows stay empty.
PropagationOperator row_normalized(const Graph& g);

/// op * x. Each output row sums its terms in stored column order.
Matrix propagate(const PropagationOperator& op, const Matrix& x);

/// op^T * x, used by backward passes through propagation.
Matrix propagate_transposed(const PropagationOperator& op, const Matrix& x);

struct LabelVector {
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  int operator[](std::size_t v) const { return labels[v]; }
};

/// Validates ids in [0, num_classes) and num_classes >= 2.
LabelVector make_labels(std::vector<int> labels, int num_classes);

struct NodeHomophily {
  std::vector<double> values;
  std::vector<bool> isolated;  // true where the node has no in-neighbors (value 0)
};

/// Same-class fraction of each node's in-neighborhood.
NodeHomophily node_homophily(const Graph& g, const LabelVector& y);

/// Mean node homophily; isolated nodes count as 0.
double average_node_homophily(const Graph& g, const LabelVector& y);

struct PageRankConfig {
  double damping = 0.85;
  double tol = 1e-8;
  int max_iter = 200;
};

struct PageRankResult {
  std::vector<double> scores;
  int iterations = 0;
  bool converged = false;
};

/// Power iteration with uniform teleport; dangling mass is spread uniformly.
/// Stops when the L1 change drops below cfg.tol.
PageRankResult pagerank(const Graph& g, const PageRankConfig& cfg = {});

}  // namespace adascope
