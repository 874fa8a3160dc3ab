#pragma once

#include <vector>

#include "adascope/graph.hpp"
#include "adascope/rng.hpp"

namespace testutil {

using adascope::Edge;
using adascope::Graph;
using adascope::Matrix;
using adascope::NodeId;

/// Erdos-Renyi style edge list; every pair is kept with probability p.
inline std::vector<Edge> random_edges(std::size_t n, double p, adascope::Rng& rng, bool directed) {
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = directed ? 0 : u + 1; v < n; ++v) {
      if (u != v && rng.bernoulli(p)) edges.emplace_back(u, v);
    }
  }
  return edges;
}

inline Graph random_graph(std::size_t n, double p, adascope::Rng& rng, bool directed = false) {
  const auto edges = random_edges(n, p, rng, directed);
  return adascope::build_graph(edges, n, directed);
}

/// Path 0-1-...-(n-1).
inline Graph path_graph(std::size_t n) {
  std::vector<Edge> edges;
  for (NodeId v = 0; v + 1 < n; ++v) edges.emplace_back(v, v + 1);
  return adascope::build_graph(edges, n, false);
}

inline Graph cycle_graph(std::size_t n, bool directed = false) {
  std::vector<Edge> edges;
  for (NodeId v = 0; v < n; ++v) edges.emplace_back(v, static_cast<NodeId>((v + 1) % n));
  return adascope::build_graph(edges, n, directed);
}

inline Graph star_graph(std::size_t leaves) {
  std::vector<Edge> edges;
  for (NodeId v = 1; v <= leaves; ++v) edges.emplace_back(0, v);
  return adascope::build_graph(edges, leaves + 1, false);
}

/// Dense 0/1 matrix with A(dst, src) = 1 for every stored arc.
inline Matrix dense_adjacency(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  Matrix a = Matrix::Zero(n, n);
  for (const auto& [src, dst] : g.arcs()) a(dst, src) = 1.0;
  return a;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, adascope::Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace testutil
