#include <cmath>
#include <numeric>
#include <string>

#include "doctest.h"

#include "adascope/error.hpp"
#include "adascope/nn.hpp"
#include "helpers.hpp"

using namespace adascope;
using testutil::random_matrix;

namespace {

MlpParams two_layer(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng,
                    NormKind norm = NormKind::kNone) {
  MlpConfig cfg;
  cfg.in = in;
  cfg.hidden = hidden;
  cfg.out = out;
  cfg.layers = 2;
  cfg.norm = norm;
  return init_mlp(cfg, rng);
}

LabelVector random_labels(std::size_t n, int c, Rng& rng) {
  std::vector<int> l(n);
  for (auto& v : l) v = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c)));
  return make_labels(l, c);
}

NodeSet all_nodes(std::size_t n) {
  NodeSet s(n);
  std::iota(s.begin(), s.end(), 0);
  return s;
}

}  // namespace

TEST_CASE("mlp_forward basics") {
  Rng rng(1);
  SUBCASE("zero parameters give zero logits") {
    MlpParams p = two_layer(3, 5, 2, rng);
    for (Matrix* m : p.parameters()) m->setZero();
    CHECK(mlp_forward(p, random_matrix(4, 3, rng), false, rng).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("identity single layer") {
    MlpConfig cfg{.in = 3, .hidden = 8, .out = 3, .layers = 1};
    MlpParams p = init_mlp(cfg, rng);
    p.layers[0].weight = Matrix::Identity(3, 3);
    p.layers[0].bias.setZero();
    const Matrix x = random_matrix(5, 3, rng);
    CHECK(mlp_forward(p, x, false, rng) == x);
  }
  SUBCASE("two layers match a straight-line evaluation") {
    const MlpParams p = two_layer(3, 4, 2, rng);
    const Matrix x = random_matrix(6, 3, rng);
    const Matrix& w1 = p.layers[0].weight;
    const Matrix& b1 = p.layers[0].bias;
    const Matrix& w2 = p.layers[1].weight;
    const Matrix& b2 = p.layers[1].bias;
    Matrix want(6, 2);
    for (int r = 0; r < 6; ++r) {
      double hidden[4];
      for (int j = 0; j < 4; ++j) {
        double z = b1(0, j);
        for (int i = 0; i < 3; ++i) z += x(r, i) * w1(i, j);
        hidden[j] = z > 0.0 ? z : 0.0;
      }
      for (int k = 0; k < 2; ++k) {
        double z = b2(0, k);
        for (int j = 0; j < 4; ++j) z += hidden[j] * w2(j, k);
        want(r, k) = z;
      }
    }
    CHECK((mlp_forward(p, x, false, rng) - want).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("inference ignores dropout") {
    MlpConfig cfg{.in = 3, .hidden = 6, .out = 2, .layers = 3, .input_dropout = 0.3, .dropout = 0.5};
    const MlpParams p = init_mlp(cfg, rng);
    const Matrix x = random_matrix(5, 3, rng);
    Rng a(1), b(99);
    CHECK(mlp_forward(p, x, false, a) == mlp_forward(p, x, false, b));
  }
  SUBCASE("shape mismatch is a contract error") {
    const MlpParams p = two_layer(3, 4, 2, rng);
    try {
      mlp_forward(p, Matrix::Zero(2, 5), false, rng);
      FAIL("expected contract error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kContract);
    }
  }
  SUBCASE("non-finite activations name the layer") {
    MlpParams p = two_layer(3, 4, 2, rng);
    p.layers[1].weight(0, 0) = std::numeric_limits<double>::infinity();
    const Matrix x = Matrix::Ones(2, 3);
    p.layers[0].weight.setOnes();
    try {
      mlp_forward(p, x, false, rng);
      FAIL("expected numeric error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNumeric);
      CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
    }
  }
}

TEST_CASE("layer normalization statistics") {
  Rng rng(2);
  MlpConfig cfg{.in = 4, .hidden = 16, .out = 3, .layers = 3, .norm = NormKind::kLayer};
  const MlpParams p = init_mlp(cfg, rng);
  MlpCache cache;
  mlp_forward(p, 3.0 * random_matrix(20, 4, rng), true, rng, &cache);
  REQUIRE(cache.normalized.size() == 2);
  for (const Matrix& xhat : cache.normalized) {
    for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
      const double mean = xhat.row(r).mean();
      const double var = (xhat.row(r).array() - mean).square().mean();
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(var - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("batch normalization is rejected") {
  CHECK(parse_norm("layer") == NormKind::kLayer);
  CHECK(parse_norm("none") == NormKind::kNone);
  try {
    parse_norm("batch");
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
}

TEST_CASE("mlp_backward") {
  Rng rng(3);
  SUBCASE("zero upstream gradient") {
    MlpConfig cfg{.in = 3, .hidden = 5, .out = 2, .layers = 3, .norm = NormKind::kLayer};
    const MlpParams p = init_mlp(cfg, rng);
    MlpCache cache;
    const Matrix x = random_matrix(4, 3, rng);
    mlp_forward(p, x, true, rng, &cache);
    const MlpGrads g = mlp_backward(p, cache, Matrix::Zero(4, 2));
    for (const Matrix& m : g.params) CHECK(m.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.input.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("linear model under squared loss") {
    MlpConfig cfg{.in = 3, .hidden = 1, .out = 2, .layers = 1};
    MlpParams p = init_mlp(cfg, rng);
    p.layers[0].bias.setZero();
    const Matrix x = random_matrix(7, 3, rng);
    const Matrix t = random_matrix(7, 2, rng);
    MlpCache cache;
    const Matrix out = mlp_forward(p, x, true, rng, &cache);
    const double n = 7.0;
    // Loss sum((xW - t)^2) / n.
    const MlpGrads g = mlp_backward(p, cache, 2.0 * (out - t) / n);
    const Matrix want = 2.0 * x.transpose() * (x * p.layers[0].weight - t) / n;
    CHECK((g.params[0] - want).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("stale caches are rejected") {
    const MlpParams p = two_layer(3, 4, 2, rng);
    const MlpParams other = p;
    MlpCache cache;
    mlp_forward(other, random_matrix(2, 3, rng), true, rng, &cache);
    CHECK_THROWS_AS(mlp_backward(p, cache, Matrix::Zero(2, 2)), Error);
    MlpCache empty;
    empty.owner = &p;
    CHECK_THROWS_AS(mlp_backward(p, empty, Matrix::Zero(2, 2)), Error);
  }
}

namespace {

// Cross-entropy of an MLP evaluated with a freshly seeded dropout stream so
// every call sees identical masks.
GradCheckReport check_mlp(MlpParams& p, const Matrix& x, const LabelVector& y,
                          const PropagationOperator* prop = nullptr) {
  const NodeSet mask = all_nodes(static_cast<std::size_t>(x.rows()));
  auto loss = [&] {
    Rng r(77);
    return cross_entropy(mlp_forward(p, x, true, r, nullptr, prop), y, mask).loss;
  };
  Rng r(77);
  MlpCache cache;
  const Matrix logits = mlp_forward(p, x, true, r, &cache, prop);
  const LossResult ce = cross_entropy(logits, y, mask);
  const MlpGrads g = mlp_backward(p, cache, ce.grad, prop);
  return grad_check(loss, p.parameters(), g.params);
}

}  // namespace

TEST_CASE("finite-difference checks of the MLP") {
  Rng rng(4);
  const Matrix x = random_matrix(6, 4, rng);
  const LabelVector y = random_labels(6, 3, rng);

  SUBCASE("linear layer") {
    MlpConfig cfg{.in = 4, .hidden = 1, .out = 3, .layers = 1};
    MlpParams p = init_mlp(cfg, rng);
    const Matrix c = random_matrix(6, 3, rng);
    auto loss = [&] { Rng r(0); return mlp_forward(p, x, false, r).cwiseProduct(c).sum(); };
    MlpCache cache;
    mlp_forward(p, x, true, rng, &cache);
    const MlpGrads g = mlp_backward(p, cache, c);
    CHECK(grad_check(loss, p.parameters(), g.params).max_rel_error < 1e-8);
  }
  SUBCASE("three-layer ReLU network with residual") {
    MlpConfig cfg{.in = 4, .hidden = 6, .out = 3, .layers = 3};
    MlpParams p = init_mlp(cfg, rng);
    const GradCheckReport rep = check_mlp(p, x, y);
    CHECK(rep.max_rel_error < 1e-4);
  }
  SUBCASE("layer norm and dropout") {
    MlpConfig cfg{.in = 4, .hidden = 6, .out = 3, .layers = 3, .norm = NormKind::kLayer,
                  .input_dropout = 0.2, .dropout = 0.3};
    MlpParams p = init_mlp(cfg, rng);
    const GradCheckReport rep = check_mlp(p, x, y);
    CHECK(rep.max_rel_error < 1e-4);
  }
  SUBCASE("input gradient") {
    MlpConfig cfg{.in = 4, .hidden = 6, .out = 3, .layers = 3, .norm = NormKind::kLayer};
    MlpParams p = init_mlp(cfg, rng);
    Matrix xin = x;
    const NodeSet mask = all_nodes(6);
    auto loss = [&] { Rng r(0); return cross_entropy(mlp_forward(p, xin, false, r), y, mask).loss; };
    MlpCache cache;
    const Matrix logits = mlp_forward(p, xin, true, rng, &cache);
    const MlpGrads g = mlp_backward(p, cache, cross_entropy(logits, y, mask).grad);
    CHECK(grad_check(loss, {&xin}, {g.input}).max_rel_error < 1e-4);
  }
}

TEST_CASE("cross entropy") {
  const LabelVector y = make_labels({0, 1, 2, 3}, 4);
  SUBCASE("uniform logits give ln C") {
    const LossResult r = cross_entropy(Matrix::Zero(4, 4), y, all_nodes(4));
    CHECK(r.loss == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  }
  SUBCASE("confident correct logits give zero loss") {
    const Matrix logits = 1000.0 * Matrix::Identity(4, 4);
    CHECK(cross_entropy(logits, y, all_nodes(4)).loss < 1e-12);
  }
  SUBCASE("gradient vanishes outside the mask and matches finite differences") {
    Rng rng(5);
    Matrix logits = random_matrix(4, 4, rng);
    const NodeSet mask{0, 2};
    const LossResult r = cross_entropy(logits, y, mask);
    CHECK(r.grad.row(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.grad.row(3).cwiseAbs().maxCoeff() == 0.0);
    auto loss = [&] { return cross_entropy(logits, y, mask).loss; };
    CHECK(grad_check(loss, {&logits}, {r.grad}).max_rel_error < 1e-4);
  }
  SUBCASE("empty mask") {
    CHECK_THROWS_AS(cross_entropy(Matrix::Zero(4, 4), y, {}), Error);
  }
}

TEST_CASE("softmax properties") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const RowVector z = 5.0 * random_matrix(1, 7, rng).row(0);
    const RowVector s = softmax(z);
    CHECK(std::abs(s.sum() - 1.0) < 1e-12);
    const RowVector shifted = softmax((z.array() + 123.4).matrix());
    CHECK((s - shifted).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("kl divergence") {
  const std::vector<double> p{0.2, 0.3, 0.5};
  CHECK(kl_divergence(p, p).value == 0.0);
  const std::vector<double> one{1.0, 0.0};
  const std::vector<double> half{0.5, 0.5};
  CHECK(kl_divergence(one, half).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(6), b(6);
    for (auto& v : a) v = rng.uniform();
    for (auto& v : b) v = rng.uniform();
    const double sa = std::accumulate(a.begin(), a.end(), 0.0);
    const double sb = std::accumulate(b.begin(), b.end(), 0.0);
    for (auto& v : a) v /= sa;
    for (auto& v : b) v /= sb;
    long double want = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) {
      want += static_cast<long double>(a[i]) * std::log(static_cast<long double>(a[i]) / b[i]);
    }
    const KlResult r = kl_divergence(a, b);
    CHECK(std::abs(r.value - static_cast<double>(want)) < 1e-12);
    CHECK(r.value >= 0.0);
    CHECK_FALSE(r.clamped);
  }

  const std::vector<double> q0{1.0, 0.0};
  const std::vector<double> p0{0.5, 0.5};
  const KlResult clamped = kl_divergence(p0, q0);
  CHECK(clamped.clamped);
  CHECK(std::isfinite(clamped.value));
}

TEST_CASE("gumbel softmax") {
  const RowVector logits = (RowVector(4) << 1.0, 0.0, -0.5, 2.0).finished();
  SUBCASE("samples lie in the open simplex and are reproducible") {
    Rng a(8), b(8);
    for (int i = 0; i < 200; ++i) {
      const GumbelSample s = gumbel_softmax(logits, 2.0, a);
      const GumbelSample t = gumbel_softmax(logits, 2.0, b);
      CHECK(s.probs == t.probs);
      CHECK(std::abs(s.probs.sum() - 1.0) < 1e-12);
      CHECK(s.probs.minCoeff() > 0.0);
      CHECK(s.probs.maxCoeff() < 1.0);
    }
  }
  SUBCASE("argmax frequencies follow softmax(logits)") {
    for (double tau : {0.5, 2.0, 10.0}) {
      Rng rng(9);
      std::vector<double> freq(4, 0.0);
      const int draws = 10000;
      for (int i = 0; i < draws; ++i) {
        const GumbelSample s = gumbel_softmax(logits, tau, rng);
        Eigen::Index k;
        s.probs.maxCoeff(&k);
        freq[static_cast<std::size_t>(k)] += 1.0 / draws;
      }
      const RowVector want = softmax(logits);
      double tv = 0.0;
      for (int k = 0; k < 4; ++k) tv += 0.5 * std::abs(freq[static_cast<std::size_t>(k)] - want(k));
      CHECK(tv < 0.02);
    }
  }
  SUBCASE("reparameterized gradient") {
    Rng rng(10);
    RowVector z = logits;
    const RowVector noise = sample_gumbel(4, rng);
    const RowVector c = random_matrix(1, 4, rng).row(0);
    const double tau = 2.0;
    const RowVector y = gumbel_softmax_with_noise(z, noise, tau);
    const RowVector g = gumbel_softmax_backward(y, c, tau);
    Matrix zm = z;
    auto loss = [&] { return gumbel_softmax_with_noise(zm.row(0), noise, tau).dot(c); };
    CHECK(grad_check(loss, {&zm}, {Matrix(g)}).max_rel_error < 1e-6);
  }
  SUBCASE("temperature must be positive") {
    CHECK_THROWS_AS(gumbel_softmax_with_noise(logits, RowVector::Zero(4), 0.0), Error);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient keeps parameters and decays moments") {
    Matrix w = (Matrix(1, 2) << 1.0, -2.0).finished();
    Adam adam;
    adam.step({&w}, {(Matrix(1, 2) << 0.5, -0.5).finished()});
    const Matrix after_one = w;
    const Matrix m1 = adam.first_moment()[0];
    const Matrix v1 = adam.second_moment()[0];
    adam.step({&w}, {Matrix::Zero(1, 2)});
    CHECK((adam.first_moment()[0] - 0.9 * m1).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((adam.second_moment()[0] - 0.999 * v1).cwiseAbs().maxCoeff() < 1e-15);
    // A zero gradient from a fresh state leaves parameters untouched.
    Matrix u = after_one;
    Adam fresh;
    fresh.step({&u}, {Matrix::Zero(1, 2)});
    CHECK(u == after_one);
  }
  SUBCASE("first step is sign-scaled") {
    const AdamConfig cfg{.lr = 0.1};
    Matrix w = Matrix::Zero(1, 3);
    const Matrix g = (Matrix(1, 3) << 2.0, -0.001, 1e-9).finished();
    Adam adam(cfg);
    adam.step({&w}, {g});
    for (int i = 0; i < 3; ++i) {
      CHECK(w(0, i) == doctest::Approx(-cfg.lr * g(0, i) / (std::abs(g(0, i)) + cfg.eps)).epsilon(1e-12));
    }
  }
  SUBCASE("quadratic loss decreases monotonically") {
    Matrix w = Matrix::Zero(1, 1);
    Adam adam;
    double prev = std::pow(w(0, 0) - 3.0, 2);
    for (int t = 0; t < 100; ++t) {
      adam.step({&w}, {Matrix::Constant(1, 1, 2.0 * (w(0, 0) - 3.0))});
      const double loss = std::pow(w(0, 0) - 3.0, 2);
      CHECK(loss < prev);
      prev = loss;
    }
  }
}
