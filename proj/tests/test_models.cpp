#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"

#include "adascope/csbm.hpp"
#include "adascope/error.hpp"
#include "adascope/models.hpp"
#include "helpers.hpp"

using namespace adascope;
using testutil::random_graph;
using testutil::random_matrix;

namespace {

NodeSet range(NodeId lo, NodeId hi) {
  NodeSet s(hi - lo);
  std::iota(s.begin(), s.end(), lo);
  return s;
}

CsbmSpec small_csbm(std::vector<Subgroup> groups, double sep, std::uint64_t seed) {
  CsbmSpec spec;
  spec.mu1.assign(4, sep);
  spec.mu2.assign(4, -sep);
  spec.subgroups = std::move(groups);
  spec.nodes_per_class = 150;
  spec.avg_degree = 5;
  spec.seed = seed;
  return spec;
}

ModelSpec quick_spec(Architecture arch, int depth, std::uint64_t seed) {
  ModelSpec s;
  s.arch = arch;
  s.depth = depth;
  s.hidden = 16;
  s.max_epochs = 150;
  s.patience = 30;
  s.seed = seed;
  return s;
}

struct Split3 {
  NodeSet train, val, test;
};

Split3 thirds(std::size_t n, std::uint64_t seed) {
  NodeSet order = range(0, static_cast<NodeId>(n));
  Rng rng(seed);
  rng.shuffle(std::span<NodeId>(order));
  Split3 s;
  const std::size_t a = n / 2, b = 3 * n / 4;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(a));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(a), order.begin() + static_cast<std::ptrdiff_t>(b));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(b), order.end());
  return s;
}

// Cross-entropy of a classifier on all nodes, dropout stream reseeded per call.
GradCheckReport check_classifier(NodeClassifier& model, const ModelInputs& in, const LabelVector& y) {
  const NodeSet all = range(0, static_cast<NodeId>(y.size()));
  auto loss = [&] {
    Rng r(5);
    return cross_entropy(model.forward(in, true, r), y, all).loss;
  };
  Rng r(5);
  ClassifierCache cache;
  const Matrix logits = model.forward(in, true, r, &cache);
  const Grads g = model.backward(in, cache, cross_entropy(logits, y, all).grad);
  return grad_check(loss, model.parameters(), g);
}

}  // namespace

TEST_CASE("architecture names") {
  CHECK(parse_architecture("sgc") == Architecture::kSgc);
  CHECK(parse_architecture("hop-attention") == Architecture::kHopAttention);
  CHECK(to_string(parse_architecture("hopattn")) == "hopattn");
  CHECK_THROWS_AS(parse_architecture("gat"), Error);
  ModelSpec s;
  s.arch = Architecture::kGcn;
  CHECK(s.effective_arch() == Architecture::kMlp);
  s.depth = 2;
  CHECK(s.effective_arch() == Architecture::kGcn);
}

TEST_CASE("sgc precompute") {
  Rng rng(1);
  const Graph g = random_graph(6, 0.5, rng);
  const PropagationOperator op = symmetric_normalized(g);
  const Matrix x = random_matrix(6, 3, rng);
  CHECK(sgc_precompute(op, x, 0) == x);

  const Graph lone = build_graph({}, 1, false);
  const Matrix xl = random_matrix(1, 4, rng);
  CHECK((sgc_precompute(symmetric_normalized(lone), xl, 5) - xl).cwiseAbs().maxCoeff() < 1e-15);

  const Matrix dense = op.matrix.to_dense();
  Matrix power = Matrix::Identity(6, 6);
  for (int l = 0; l < 3; ++l) power = power * dense;
  CHECK((sgc_precompute(op, x, 3) - power * x).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((sgc_precompute(op, sgc_precompute(op, x, 1), 2) - sgc_precompute(op, x, 3)).cwiseAbs().maxCoeff() <
        1e-14);
}

TEST_CASE("gcn forward") {
  Rng rng(2);
  SUBCASE("one layer, identity weights, isolated node") {
    NodeClassifier model(quick_spec(Architecture::kGcn, 1, 3), 3, 3);
    auto params = model.parameters();
    REQUIRE(params.size() == 2);
    *params[0] = Matrix::Identity(3, 3);
    params[1]->setZero();
    const Graph lone = build_graph({}, 1, false);
    const Matrix x = (Matrix(1, 3) << 0.5, 2.0, 1.5).finished();
    CHECK((model.predict_logits(lone, x) - x).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("zero weights") {
    NodeClassifier model(quick_spec(Architecture::kGcn, 3, 3), 4, 2);
    for (Matrix* m : model.parameters()) m->setZero();
    const Graph g = random_graph(5, 0.5, rng);
    CHECK(model.predict_logits(g, random_matrix(5, 4, rng)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("two nodes, two layers, straight-line evaluation") {
    ModelSpec spec = quick_spec(Architecture::kGcn, 2, 4);
    spec.hidden = 2;
    NodeClassifier model(spec, 2, 2);
    auto p = model.parameters();
    *p[0] = (Matrix(2, 2) << 1.0, -1.0, 0.5, 2.0).finished();
    *p[1] = (Matrix(1, 2) << 0.1, -0.2).finished();
    *p[2] = (Matrix(2, 2) << 0.3, 1.0, -0.7, 0.4).finished();
    *p[3] = (Matrix(1, 2) << 0.0, 0.05).finished();
    const std::vector<Edge> e{{0, 1}};
    const Graph g = build_graph(e, 2, false);
    const Matrix x = (Matrix(2, 2) << 1.0, 2.0, -1.0, 0.5).finished();
    // The 2-node operator has every entry 1/2, so each layer averages the rows.
    double h[2][2];
    for (int v = 0; v < 2; ++v) {
      for (int j = 0; j < 2; ++j) {
        double z = 0.0;
        for (int u = 0; u < 2; ++u) z += 0.5 * (x(u, 0) * (*p[0])(0, j) + x(u, 1) * (*p[0])(1, j));
        z += (*p[1])(0, j);
        h[v][j] = std::max(z, 0.0);
      }
    }
    Matrix want(2, 2);
    for (int v = 0; v < 2; ++v) {
      for (int k = 0; k < 2; ++k) {
        double z = 0.0;
        for (int u = 0; u < 2; ++u) z += 0.5 * (h[u][0] * (*p[2])(0, k) + h[u][1] * (*p[2])(1, k));
        want(v, k) = z + (*p[3])(0, k);
      }
    }
    CHECK((model.predict_logits(g, x) - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("hop attention") {
  Rng rng(3);
  std::vector<Matrix> hops;
  for (int l = 0; l < 4; ++l) hops.push_back(random_matrix(5, 3, rng));
  SUBCASE("equal scores average the hops") {
    Linear scorer{Matrix::Zero(3, 1), Matrix::Constant(1, 1, 0.7)};
    const HopAttentionOutput out = hop_attention_forward(hops, scorer);
    CHECK((out.alpha.array() - 0.25).abs().maxCoeff() < 1e-15);
    const Matrix mean = (hops[0] + hops[1] + hops[2] + hops[3]) / 4.0;
    CHECK((out.combined - mean).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("a dominant score selects its hop") {
    std::vector<Matrix> h = hops;
    h[2].col(0).setConstant(1000.0);
    Linear scorer{(Matrix(3, 1) << 1.0, 0.0, 0.0).finished(), Matrix::Zero(1, 1)};
    const HopAttentionOutput out = hop_attention_forward(h, scorer);
    CHECK((out.combined - h[2]).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("weights sum to one and gradients match finite differences") {
    Linear scorer = init_linear(3, 1, rng);
    const HopAttentionOutput out = hop_attention_forward(hops, scorer);
    for (Eigen::Index r = 0; r < out.alpha.rows(); ++r) CHECK(std::abs(out.alpha.row(r).sum() - 1.0) < 1e-9);
    const Matrix c = random_matrix(5, 3, rng);
    std::vector<Matrix> h = hops;
    auto loss = [&] { return hop_attention_forward(h, scorer).combined.cwiseProduct(c).sum(); };
    const HopAttentionGrads g = hop_attention_backward(h, scorer, out, c);
    std::vector<Matrix*> params{&scorer.weight, &scorer.bias};
    Grads grads{g.weight, g.bias};
    for (std::size_t l = 0; l < h.size(); ++l) {
      params.push_back(&h[l]);
      grads.push_back(g.hops[l]);
    }
    CHECK(grad_check(loss, params, grads).max_rel_error < 1e-4);
  }
}

TEST_CASE("classifier gradients") {
  Rng rng(4);
  const Graph g = random_graph(8, 0.35, rng);
  const Matrix x = random_matrix(8, 4, rng);
  std::vector<int> labels(8);
  for (auto& l : labels) l = static_cast<int>(rng.uniform_int(3));
  const LabelVector y = make_labels(labels, 3);
  for (Architecture arch : {Architecture::kMlp, Architecture::kSgc, Architecture::kGcn, Architecture::kHopAttention}) {
    for (NormKind norm : {NormKind::kNone, NormKind::kLayer}) {
      ModelSpec spec = quick_spec(arch, arch == Architecture::kMlp ? 0 : 3, 9);
      spec.hidden = 5;
      spec.norm = norm;
      spec.dropout = 0.2;
      CAPTURE(to_string(arch));
      CAPTURE(to_string(norm));
      NodeClassifier model(spec, 4, 3);
      const ModelInputs in = prepare_inputs(spec, g, x);
      CHECK(check_classifier(model, in, y).max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("structure invariances") {
  Rng rng(5);
  const Graph g = random_graph(12, 0.3, rng);
  const Matrix x = random_matrix(12, 3, rng);
  SUBCASE("depth-0 predictions ignore edges") {
    const NodeClassifier mlp(quick_spec(Architecture::kSgc, 0, 1), 3, 2);
    const Graph other = random_graph(12, 0.6, rng);
    CHECK(mlp.predict_logits(g, x) == mlp.predict_logits(other, x));
  }
  SUBCASE("gcn and sgc are permutation equivariant") {
    std::vector<NodeId> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<NodeId>(perm));
    Matrix xp(12, 3);
    for (NodeId v = 0; v < 12; ++v) xp.row(perm[v]) = x.row(v);
    for (Architecture arch : {Architecture::kGcn, Architecture::kSgc, Architecture::kHopAttention}) {
      const NodeClassifier model(quick_spec(arch, 2, 7), 3, 2);
      const Matrix a = model.predict_logits(g, x);
      const Matrix b = model.predict_logits(g.permuted(perm), xp);
      for (NodeId v = 0; v < 12; ++v) CHECK((a.row(v) - b.row(perm[v])).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("train_classifier") {
  SUBCASE("separable features reach perfect training accuracy") {
    Rng rng(6);
    const std::size_t n = 60;
    Matrix x(static_cast<Eigen::Index>(n), 2);
    std::vector<int> labels(n);
    for (std::size_t v = 0; v < n; ++v) {
      labels[v] = v % 2;
      x(static_cast<Eigen::Index>(v), 0) = (labels[v] ? 1.0 : -1.0) * (0.5 + rng.uniform());
      x(static_cast<Eigen::Index>(v), 1) = rng.normal();
    }
    const LabelVector y = make_labels(labels, 2);
    const Graph g = build_graph({}, n, false);
    const NodeSet train = range(0, 40), val = range(40, 60);
    const TrainedClassifier tc = train_classifier(quick_spec(Architecture::kMlp, 0, 1), g, x, y, train, val);
    CHECK(accuracy(tc.model.predict_logits(g, x), y, train) == 1.0);
    CHECK(tc.best_val_accuracy == 1.0);
  }
  SUBCASE("noise labels stay at chance") {
    Rng rng(7);
    const std::size_t n = 400;
    const Matrix x = random_matrix(static_cast<Eigen::Index>(n), 5, rng);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_int(4));
    const LabelVector y = make_labels(labels, 4);
    const Graph g = build_graph({}, n, false);
    ModelSpec spec = quick_spec(Architecture::kMlp, 0, 2);
    const TrainedClassifier tc = train_classifier(spec, g, x, y, range(0, 200), range(200, 300));
    CHECK(std::abs(accuracy(tc.model.predict_logits(g, x), y, range(300, 400)) - 0.25) < 0.1);
  }
  SUBCASE("overlapping sets are rejected") {
    const Graph g = build_graph({}, 4, false);
    const LabelVector y = make_labels({0, 1, 0, 1}, 2);
    CHECK_THROWS_AS(train_classifier(quick_spec(Architecture::kMlp, 0, 1), g, Matrix::Ones(4, 2), y, {0, 1}, {1, 2}),
                    Error);
  }
  SUBCASE("divergence aborts with diagnostics") {
    Rng rng(8);
    const Graph g = build_graph({}, 10, false);
    const Matrix x = random_matrix(10, 3, rng);
    const LabelVector y = make_labels({0, 1, 0, 1, 0, 1, 0, 1, 0, 1}, 2);
    ModelSpec spec = quick_spec(Architecture::kMlp, 0, 1);
    spec.lr = 1e300;
    try {
      train_classifier(spec, g, x, y, range(0, 5), range(5, 10));
      FAIL("expected a numeric error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNumeric);
    }
  }
  SUBCASE("training is bit-reproducible") {
    const CsbmSample s = generate_csbm(small_csbm({{0.8, 1.0}}, 0.3, 1));
    const Split3 sp = thirds(s.graph.num_nodes(), 1);
    ModelSpec spec = quick_spec(Architecture::kGcn, 2, 11);
    spec.dropout = 0.3;
    spec.max_epochs = 30;
    const TrainedClassifier a = train_classifier(spec, s.graph, s.features, s.labels, sp.train, sp.val);
    const TrainedClassifier b = train_classifier(spec, s.graph, s.features, s.labels, sp.train, sp.val);
    const auto pa = a.model.parameters();
    const auto pb = b.model.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i] == *pb[i]);
    CHECK(a.train_losses == b.train_losses);
  }
}

TEST_CASE("propagation helps on homophilous CSBM") {
  double gain = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const CsbmSample s = generate_csbm(small_csbm({{0.9, 1.0}}, 0.25, seed));
    const Split3 sp = thirds(s.graph.num_nodes(), seed);
    const auto test_acc = [&](int depth) {
      const TrainedClassifier tc =
          train_classifier(quick_spec(Architecture::kSgc, depth, seed), s.graph, s.features, s.labels, sp.train, sp.val);
      return accuracy(tc.model.predict_logits(s.graph, s.features), s.labels, sp.test);
    };
    gain += (test_acc(2) - test_acc(0)) / 5.0;
  }
  CHECK(gain > 0.0);
}

TEST_CASE("depth family") {
  const CsbmSample s = generate_csbm(small_csbm({{0.9, 0.5}, {0.1, 0.5}}, 0.3, 3));
  const Split3 sp = thirds(s.graph.num_nodes(), 3);
  SUBCASE("lmax = 1 yields an MLP and one propagated model") {
    const DepthFamily fam = train_depth_family(Architecture::kGcn, 1, s.graph, s.features, s.labels, sp.train,
                                               sp.val, quick_spec(Architecture::kGcn, 0, 1));
    REQUIRE(fam.members.size() == 2);
    CHECK(fam.members[0].model.spec().effective_arch() == Architecture::kMlp);
    CHECK(fam.members[1].model.spec().effective_arch() == Architecture::kGcn);
    CHECK(fam.logits.cols() == 2 * 2);
    CHECK(fam.block(1) == fam.members[1].model.predict_logits(s.graph, s.features));
  }
  SUBCASE("depths disagree on mixed homophily") {
    double spread = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const DepthFamily fam = train_depth_family(Architecture::kSgc, 4, s.graph, s.features, s.labels, sp.train,
                                                 sp.val, quick_spec(Architecture::kSgc, 0, seed));
      CHECK(fam.logits.cols() == 2 * 5);
      std::vector<double> val;
      for (const auto& m : fam.members) val.push_back(m.best_val_accuracy);
      spread += (*std::max_element(val.begin(), val.end()) - *std::min_element(val.begin(), val.end())) / 3.0;
    }
    CHECK(spread > 0.01);
  }
  SUBCASE("lmax must be positive") {
    CHECK_THROWS_AS(train_depth_family(Architecture::kSgc, 0, s.graph, s.features, s.labels, sp.train, sp.val, {}),
                    Error);
  }
}
