#include "adascope/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "adascope/error.hpp"

namespace adascope {

Graph build_graph(std::span<const Edge> edges, std::size_t num_nodes, bool directed) {
  std::vector<Edge> arcs;
  arcs.reserve(directed ? edges.size() : 2 * edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto [src, dst] = edges[i];
    if (src >= num_nodes || dst >= num_nodes) {
      fail(ErrorKind::kInput, "edge " + std::to_string(i + 1) + " (" + std::to_string(src) +
                                  ", " + std::to_string(dst) + ") has a node id outside [0, " +
                                  std::to_string(num_nodes) + ")");
    }
    if (src == dst) continue;
    arcs.emplace_back(src, dst);
    if (!directed) arcs.emplace_back(dst, src);
  }
  // Sort by destination row, then source column.
  std::sort(arcs.begin(), arcs.end(), [](const Edge& a, const Edge& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());

  Graph g;
  g.directed_ = directed;
  g.row_ptr_.assign(num_nodes + 1, 0);
  g.col_idx_.reserve(arcs.size());
  for (const auto& [src, dst] : arcs) {
    ++g.row_ptr_[dst + 1];
    g.col_idx_.push_back(src);
  }
  std::partial_sum(g.row_ptr_.begin(), g.row_ptr_.end(), g.row_ptr_.begin());
  return g;
}

std::vector<std::size_t> Graph::in_degrees() const {
  std::vector<std::size_t> d(num_nodes());
  for (std::size_t v = 0; v < d.size(); ++v) d[v] = in_degree(static_cast<NodeId>(v));
  return d;
}

std::vector<std::size_t> Graph::out_degrees() const {
  std::vector<std::size_t> d(num_nodes(), 0);
  for (NodeId u : col_idx_) ++d[u];
  return d;
}

std::vector<Edge> Graph::arcs() const {
  std::vector<Edge> out;
  out.reserve(num_arcs());
  for (std::size_t v = 0; v < num_nodes(); ++v) {
    for (NodeId u : in_neighbors(static_cast<NodeId>(v))) out.emplace_back(u, static_cast<NodeId>(v));
  }
  return out;
}

Graph Graph::symmetrized() const {
  if (!directed_) return *this;
  const auto a = arcs();
  return build_graph(a, num_nodes(), false);
}

Graph Graph::permuted(std::span<const NodeId> perm) const {
  require(perm.size() == num_nodes(), "permutation size must equal node count");
  auto a = arcs();
  for (auto& [src, dst] : a) {
    src = perm[src];
    dst = perm[dst];
  }
  return build_graph(a, num_nodes(), directed_);
}

Matrix CsrMatrix::to_dense() const {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      out(static_cast<Eigen::Index>(r), col_idx[k]) += values[k];
    }
  }
  return out;
}

CsrMatrix CsrMatrix::transposed() const {
  CsrMatrix t;
  t.n = n;
  t.row_ptr.assign(n + 1, 0);
  for (NodeId c : col_idx) ++t.row_ptr[c + 1];
  std::partial_sum(t.row_ptr.begin(), t.row_ptr.end(), t.row_ptr.begin());
  t.col_idx.resize(col_idx.size());
  t.values.resize(values.size());
  std::vector<std::size_t> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
  // Rows visited in ascending order keep each transposed row sorted.
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      const std::size_t dst = cursor[col_idx[k]]++;
      t.col_idx[dst] = static_cast<NodeId>(r);
      t.values[dst] = values[k];
    }
  }
  return t;
}

PropagationOperator symmetric_normalized(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> inv_sqrt(n);
  for (std::size_t v = 0; v < n; ++v) {
    inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(g.in_degree(static_cast<NodeId>(v)) + 1));
  }
  CsrMatrix m;
  m.n = n;
  m.row_ptr.assign(n + 1, 0);
  m.col_idx.reserve(g.num_arcs() + n);
  m.values.reserve(g.num_arcs() + n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto nbrs = g.in_neighbors(static_cast<NodeId>(v));
    bool diag_done = false;
    for (NodeId u : nbrs) {
      if (!diag_done && u > v) {
        m.col_idx.push_back(static_cast<NodeId>(v));
        m.values.push_back(inv_sqrt[v] * inv_sqrt[v]);
        diag_done = true;
      }
      m.col_idx.push_back(u);
      m.values.push_back(inv_sqrt[v] * inv_sqrt[u]);
    }
    if (!diag_done) {
      m.col_idx.push_back(static_cast<NodeId>(v));
      m.values.push_back(inv_sqrt[v] * inv_sqrt[v]);
    }
    m.row_ptr[v + 1] = m.col_idx.size();
  }
  return {PropagationKind::kSymmetric, std::move(m)};
}

PropagationOperator row_normalized(const Graph& g) {
  const std::size_t n = g.num_nodes();
  CsrMatrix m;
  m.n = n;
  m.row_ptr = g.row_ptr();
  m.col_idx = g.col_idx();
  m.values.resize(m.col_idx.size());
  for (std::size_t v = 0; v < n; ++v) {
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(1, g.in_degree(static_cast<NodeId>(v))));
    for (std::size_t k = m.row_ptr[v]; k < m.row_ptr[v + 1]; ++k) m.values[k] = inv;
  }
  return {PropagationKind::kRowNormalized, std::move(m)};
}

Matrix propagate(const PropagationOperator& op, const Matrix& x) {
  const CsrMatrix& m = op.matrix;
  if (static_cast<std::size_t>(x.rows()) != m.n) {
    fail(ErrorKind::kContract, "propagate: operator has " + std::to_string(m.n) +
                                   " columns but input has " + std::to_string(x.rows()) + " rows");
  }
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (std::size_t r = 0; r < m.n; ++r) {
    auto dst = out.row(static_cast<Eigen::Index>(r));
    for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
      dst.noalias() += m.values[k] * x.row(m.col_idx[k]);
    }
  }
  return out;
}

Matrix propagate_transposed(const PropagationOperator& op, const Matrix& x) {
  const CsrMatrix& m = op.matrix;
  if (static_cast<std::size_t>(x.rows()) != m.n) {
    fail(ErrorKind::kContract, "propagate_transposed: dimension mismatch");
  }
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (std::size_t r = 0; r < m.n; ++r) {
    const auto src = x.row(static_cast<Eigen::Index>(r));
    for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
      out.row(m.col_idx[k]).noalias() += m.values[k] * src;
    }
  }
  return out;
}

LabelVector make_labels(std::vector<int> labels, int num_classes) {
  if (num_classes < 2) fail(ErrorKind::kInput, "label vector needs at least 2 classes");
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] < 0 || labels[v] >= num_classes) {
      fail(ErrorKind::kInput, "label " + std::to_string(labels[v]) + " of node " +
                                  std::to_string(v) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
  return {std::move(labels), num_classes};
}

NodeHomophily node_homophily(const Graph& g, const LabelVector& y) {
  require(y.size() == g.num_nodes(), "node_homophily: label count must equal node count");
  NodeHomophily h;
  h.values.assign(g.num_nodes(), 0.0);
  h.isolated.assign(g.num_nodes(), false);
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const auto nbrs = g.in_neighbors(static_cast<NodeId>(v));
    if (nbrs.empty()) {
      h.isolated[v] = true;
      continue;
    }
    const auto same = std::count_if(nbrs.begin(), nbrs.end(),
                                    [&](NodeId u) { return y[u] == y[v]; });
    h.values[v] = static_cast<double>(same) / static_cast<double>(nbrs.size());
  }
  return h;
}

double average_node_homophily(const Graph& g, const LabelVector& y) {
  if (g.num_nodes() == 0) return 0.0;
  const auto h = node_homophily(g, y);
  return std::accumulate(h.values.begin(), h.values.end(), 0.0) /
         static_cast<double>(g.num_nodes());
}

PageRankResult pagerank(const Graph& g, const PageRankConfig& cfg) {
  if (!(cfg.damping > 0.0 && cfg.damping < 1.0)) {
    fail(ErrorKind::kConfig, "pagerank damping must lie in (0, 1)");
  }
  const std::size_t n = g.num_nodes();
  PageRankResult res;
  if (n == 0) {
    res.converged = true;
    return res;
  }
  const auto out_deg = g.out_degrees();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> rank(n, inv_n), next(n), share(n);
  for (int it = 1; it <= cfg.max_iter; ++it) {
    double dangling = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      if (out_deg[u] == 0) {
        dangling += rank[u];
        share[u] = 0.0;
      } else {
        share[u] = rank[u] / static_cast<double>(out_deg[u]);
      }
    }
    const double base = (1.0 - cfg.damping) * inv_n + cfg.damping * dangling * inv_n;
    double total = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      double acc = 0.0;
      for (NodeId u : g.in_neighbors(static_cast<NodeId>(v))) acc += share[u];
      next[v] = base + cfg.damping * acc;
      total += next[v];
    }
    double change = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      next[v] /= total;  // guards against drift; total is 1 up to rounding
      change += std::abs(next[v] - rank[v]);
    }
    rank.swap(next);
    res.iterations = it;
    if (change < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.scores = std::move(rank);
  return res;
}

}  // namespace adascope
